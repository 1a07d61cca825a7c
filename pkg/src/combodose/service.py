"""JSON-over-HTTP conduct service consumed by the browser dashboard.

Sessions are persisted as JSON snapshots plus an append-only audit log.
Mutating calls carry the session's current version token; a stale token
gets a 409 so two statisticians cannot silently race each other. All
statistical values in responses come straight from the design engine.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .models import DEFAULT_WINDOW, DoseWindow, destandardize
from .inference import CONDUCT_MCMC, McmcConfig, exceedance_profile
from .design import (DesignConfig, PhaseError, TrialState, advance,
                     ensure_draws, final_decision, new_trial)
from .persist import state_from_dict, state_to_dict

STORE_ENV = "COMBODOSE_STORE"


class DesignConfigBody(BaseModel):
    theta_z: float = 0.33
    theta_e: float = 0.15
    n1: int = 30
    n2: int = 30
    m1: int = 2
    m2: int = 5
    ewoc_alpha_start: float = 0.25
    ewoc_alpha_cap: float = 0.5
    ewoc_alpha_step: float = 0.05
    delta_u: float = 0.80
    delta0: float = 0.1
    delta_theta1: float = 0.5
    delta_theta2: float = 0.7
    grid_size: int = 201


class WindowBody(BaseModel):
    x_min: float = DEFAULT_WINDOW.x_min
    x_max: float = DEFAULT_WINDOW.x_max
    y_min: float = DEFAULT_WINDOW.y_min
    y_max: float = DEFAULT_WINDOW.y_max


class McmcBody(BaseModel):
    iterations: int = CONDUCT_MCMC.iterations
    burn_in: int = CONDUCT_MCMC.burn_in
    thin: int = 1
    chains: int = CONDUCT_MCMC.chains


class CreateSessionBody(BaseModel):
    seed: int = 0
    config: DesignConfigBody = Field(default_factory=DesignConfigBody)
    window: WindowBody = Field(default_factory=WindowBody)
    mcmc: McmcBody = Field(default_factory=McmcBody)


class OutcomeEntry(BaseModel):
    z: int = Field(ge=0, le=1)
    e: Optional[int] = Field(default=None, ge=0, le=1)


class OutcomesBody(BaseModel):
    version: int
    outcomes: List[OutcomeEntry]


class FinalizeBody(BaseModel):
    version: int


class SessionStore:
    """File-backed session store with per-session mutation locks."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._cache: Dict[str, TrialState] = {}

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _session_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.json"

    def _audit_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.audit.jsonl"

    def exists(self, session_id: str) -> bool:
        return self._session_path(session_id).exists()

    def load(self, session_id: str):
        path = self._session_path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail="session not found")
        doc = json.loads(path.read_text())
        if session_id in self._cache:
            state = self._cache[session_id]
        else:
            state = state_from_dict(doc["state"])
            self._cache[session_id] = state
        return doc, state

    def save(self, session_id: str, doc: dict, state: TrialState):
        doc["state"] = state_to_dict(state)
        path = self._session_path(session_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)
        self._cache[session_id] = state

    def audit(self, session_id: str, event: str, payload: dict):
        entry = {"ts": time.time(), "event": event, **payload}
        with open(self._audit_path(session_id), "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _pending_payload(state: TrialState) -> list:
    out = []
    for a in state.pending:
        raw_x, raw_y = destandardize(a.dose, state.window)
        out.append({"index": a.index, "x": a.dose.x, "y": a.dose.y,
                    "raw_x": raw_x, "raw_y": raw_y, "stage": a.stage,
                    "cohort": a.cohort, "alpha": a.alpha})
    return out


def _refresh_derived(doc: dict, state: TrialState):
    """Recompute response-side summaries after a mutation."""
    doc["exceedance"] = None
    doc["exceedance_argmax"] = None
    doc["convergence"] = None
    if state.eff_draws is not None and state.curve is not None \
            and not state.curve.is_empty:
        profile, argmax = exceedance_profile(state.eff_draws, state.curve,
                                             state.config.theta_e)
        doc["exceedance"] = [float(v) for v in profile]
        doc["exceedance_argmax"] = int(argmax)
    rhats = {}
    for tag, draws in (("toxicity", state.tox_draws),
                       ("efficacy", state.eff_draws)):
        if draws is not None and draws.rhat is not None:
            finite = draws.rhat[np.isfinite(draws.rhat)]
            if finite.size:
                rhats[tag] = float(np.max(finite))
    if rhats:
        doc["convergence"] = {"split_rhat_max": rhats}


def _state_payload(session_id: str, doc: dict, state: TrialState) -> dict:
    curve = None
    if state.curve is not None:
        if state.curve.is_empty:
            curve = {"x": [], "y": [], "empty_reason": state.curve.empty_reason}
        else:
            curve = {"x": state.curve.xs.tolist(),
                     "y": state.curve.ys.tolist(), "empty_reason": None}
    return {
        "id": session_id,
        "version": doc["version"],
        "phase": state.phase,
        "stop_reason": state.stop_reason,
        "enrolled": len(state.data),
        "window": {"x_min": state.window.x_min, "x_max": state.window.x_max,
                   "y_min": state.window.y_min, "y_max": state.window.y_max},
        "records": [
            {"index": r.index, "x": r.dose.x, "y": r.dose.y,
             "raw_x": destandardize(r.dose, state.window)[0],
             "raw_y": destandardize(r.dose, state.window)[1],
             "z": r.z, "e": r.e, "stage": r.stage, "cohort": r.cohort}
            for r in state.data.records
        ],
        "pending": _pending_payload(state),
        "curve": curve,
        "exceedance": doc.get("exceedance"),
        "exceedance_argmax": doc.get("exceedance_argmax"),
        "convergence": doc.get("convergence"),
        "config": {"theta_z": state.config.theta_z,
                   "theta_e": state.config.theta_e,
                   "delta_u": state.config.delta_u,
                   "n1": state.config.n1, "n2": state.config.n2,
                   "m1": state.config.m1, "m2": state.config.m2},
    }


def create_app(store_dir: Optional[str] = None) -> FastAPI:
    directory = Path(store_dir or os.environ.get(STORE_ENV)
                     or "combodose-sessions")
    store = SessionStore(directory)
    app = FastAPI(title="combodose conduct service")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            config = DesignConfig(**body.config.model_dump())
            window = DoseWindow(**body.window.model_dump())
            mcmc = McmcConfig(**body.mcmc.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex[:12]
        state = new_trial(config, window=window, seed=body.seed, mcmc=mcmc)
        doc = {"id": session_id, "version": 1, "created": time.time()}
        _refresh_derived(doc, state)
        store.save(session_id, doc, state)
        store.audit(session_id, "created", {"seed": body.seed})
        return _state_payload(session_id, doc, state)

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        doc, state = store.load(session_id)
        return _state_payload(session_id, doc, state)

    @app.post("/sessions/{session_id}/outcomes")
    def post_outcomes(session_id: str, body: OutcomesBody):
        with store.lock(session_id):
            doc, state = store.load(session_id)
            if body.version != doc["version"]:
                raise HTTPException(
                    status_code=409,
                    detail=f"version conflict: expected {doc['version']}")
            if not state.is_active:
                raise HTTPException(status_code=409,
                                    detail=f"trial not active ({state.phase})")
            if len(body.outcomes) != len(state.pending):
                raise HTTPException(
                    status_code=422,
                    detail={"field": "outcomes",
                            "message": f"expected {len(state.pending)} entries, "
                                       f"got {len(body.outcomes)}"})
            outcomes = [(o.z, o.e) for o in body.outcomes]
            try:
                advance(state, outcomes)
            except (PhaseError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            doc["version"] += 1
            _refresh_derived(doc, state)
            store.save(session_id, doc, state)
            store.audit(session_id, "outcomes",
                        {"version": doc["version"],
                         "outcomes": [{"z": o.z, "e": o.e}
                                      for o in body.outcomes]})
            return _state_payload(session_id, doc, state)

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str, body: FinalizeBody):
        with store.lock(session_id):
            doc, state = store.load(session_id)
            if body.version != doc["version"]:
                raise HTTPException(
                    status_code=409,
                    detail=f"version conflict: expected {doc['version']}")
            if state.is_active:
                raise HTTPException(status_code=409,
                                    detail="trial still active")
            ensure_draws(state)
            decision = final_decision(state)
            store.audit(session_id, "finalized",
                        {"reject_h0": decision.reject_h0})
            payload = {
                "reject_h0": decision.reject_h0,
                "delta_u": decision.delta_u,
                "max_exceedance": decision.max_exceedance,
                "stop_reason": decision.stop_reason,
                "no_recommendation_reason": decision.no_recommendation_reason,
                "opt_dose": None,
            }
            if decision.opt_dose is not None:
                raw_x, raw_y = destandardize(decision.opt_dose, state.window)
                payload["opt_dose"] = {"x": decision.opt_dose.x,
                                       "y": decision.opt_dose.y,
                                       "raw_x": raw_x, "raw_y": raw_y,
                                       "exceedance": decision.opt_exceedance}
            return payload

    return app

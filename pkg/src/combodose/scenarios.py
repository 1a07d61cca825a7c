"""Simulation scenarios: true model parameters under H0 and H1.

The bundled scenarios cross two dose-toxicity profiles with four
dose-efficacy profiles, each under the null (best achievable efficacy on
the true MTD curve equal to theta_e = 0.15) and the alternative (effect
size 0.25, best efficacy 0.40). Scenario files are plain JSON and can be
edited or replaced on the command line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .models import EfficacyParams, ToxicityParamsClinical


class ScenarioError(ValueError):
    """Malformed scenario file; message names the offending field."""


@dataclass(frozen=True)
class Scenario:
    tox: ToxicityParamsClinical
    eff: EfficacyParams
    hypothesis: str                 # "H0" | "H1"
    tox_label: Optional[int] = None
    eff_label: Optional[int] = None

    def __post_init__(self):
        if self.hypothesis not in ("H0", "H1"):
            raise ScenarioError("hypothesis must be 'H0' or 'H1'")

    @property
    def name(self) -> str:
        t = self.tox_label if self.tox_label is not None else "x"
        e = self.eff_label if self.eff_label is not None else "x"
        return f"tox{t}-eff{e}-{self.hypothesis}"

    def to_dict(self) -> dict:
        return {
            "tox": {"rho00": self.tox.rho00, "rho10": self.tox.rho10,
                    "rho01": self.tox.rho01, "alpha3": self.tox.alpha3},
            "eff": {f"beta{i}": getattr(self.eff, f"beta{i}") for i in range(6)},
            "hypothesis": self.hypothesis,
            "labels": {"tox_scenario": self.tox_label, "eff_scenario": self.eff_label},
        }


_TOX_TABLE = {
    1: dict(rho00=1e-7, rho10=0.3, rho01=0.3, alpha3=2.0),
    2: dict(rho00=1e-5, rho10=0.005, rho01=0.01, alpha3=9.0),
}

# (beta0 under H0, beta0 under H1, beta1, beta2, beta3); beta4 = beta5 = 0
# in every data-generating profile.
_EFF_TABLE = {
    (1, 1): (-6.3, -5.51, 2.0, 4.3, 10.0),
    (1, 2): (-6.3, -5.51, 4.3, 2.0, 10.0),
    (1, 3): (-7.3, -6.5, 6.17, 5.5, 0.0),
    (1, 4): (-4.8, -4.0, 1.25, 1.25, 12.0),
    (2, 1): (-2.8, -2.0, 0.05, 1.57, 1.0),
    (2, 2): (-2.8, -2.0, 1.55, 0.05, 1.0),
    (2, 3): (-6.6, -5.8, 4.63, 4.73, 0.0),
    (2, 4): (-7.28, -6.49, 0.2, 0.2, 26.0),
}


def builtin_scenario(tox_label: int, eff_label: int, hypothesis: str) -> Scenario:
    if tox_label not in _TOX_TABLE:
        raise ScenarioError(f"unknown toxicity scenario {tox_label}")
    if (tox_label, eff_label) not in _EFF_TABLE:
        raise ScenarioError(f"unknown efficacy scenario {eff_label}")
    if hypothesis not in ("H0", "H1"):
        raise ScenarioError("hypothesis must be 'H0' or 'H1'")
    b0_h0, b0_h1, b1, b2, b3 = _EFF_TABLE[(tox_label, eff_label)]
    b0 = {"H0": b0_h0, "H1": b0_h1}[hypothesis]
    return Scenario(
        tox=ToxicityParamsClinical(**_TOX_TABLE[tox_label]),
        eff=EfficacyParams(beta0=b0, beta1=b1, beta2=b2, beta3=b3,
                           beta4=0.0, beta5=0.0),
        hypothesis=hypothesis,
        tox_label=tox_label,
        eff_label=eff_label,
    )


def builtin_scenarios():
    """All sixteen bundled scenarios."""
    return [builtin_scenario(t, e, h)
            for t in (1, 2) for e in (1, 2, 3, 4) for h in ("H0", "H1")]


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"missing field: {path}{key}")
    return obj[key]


def scenario_from_dict(doc: dict) -> Scenario:
    tox = _require(doc, "tox", "")
    eff = _require(doc, "eff", "")
    hyp = _require(doc, "hypothesis", "")
    tox_kwargs = {}
    for k in ("rho00", "rho10", "rho01", "alpha3"):
        v = _require(tox, k, "tox.")
        if not isinstance(v, (int, float)):
            raise ScenarioError(f"non-numeric field: tox.{k}")
        tox_kwargs[k] = float(v)
    eff_kwargs = {}
    for k in (f"beta{i}" for i in range(6)):
        v = _require(eff, k, "eff.")
        if not isinstance(v, (int, float)):
            raise ScenarioError(f"non-numeric field: eff.{k}")
        eff_kwargs[k] = float(v)
    labels = doc.get("labels", {}) or {}
    try:
        return Scenario(tox=ToxicityParamsClinical(**tox_kwargs),
                        eff=EfficacyParams(**eff_kwargs),
                        hypothesis=hyp,
                        tox_label=labels.get("tox_scenario"),
                        eff_label=labels.get("eff_scenario"))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(source: str) -> Scenario:
    """Load a scenario from a JSON file path or a builtin name.

    Builtin names look like 'tox1-eff1-H1'.
    """
    path = Path(source)
    if path.exists():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {source}: {exc}") from exc
        return scenario_from_dict(doc)
    parts = source.split("-")
    if len(parts) == 3 and parts[0].startswith("tox") and parts[1].startswith("eff"):
        try:
            return builtin_scenario(int(parts[0][3:]), int(parts[1][3:]), parts[2])
        except (ValueError, ScenarioError) as exc:
            raise ScenarioError(f"unknown builtin scenario {source!r}") from exc
    raise ScenarioError(f"scenario file not found: {source}")


def write_builtin_fixtures(outdir: Path):
    """Write all bundled scenarios as JSON files into a directory."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for sc in builtin_scenarios():
        (outdir / f"{sc.name}.json").write_text(
            json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n")

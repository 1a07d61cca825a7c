"""Command-line entry points: simulation, calibration, and live conduct."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np

from .models import DEFAULT_WINDOW, DoseWindow, destandardize
from .inference import CONDUCT_MCMC, McmcConfig
from .design import (DesignConfig, PhaseError, advance, final_decision,
                     new_trial)
from .persist import read_state, write_state
from .reporting import write_report
from .scenarios import ScenarioError, load_scenario, write_builtin_fixtures
from .simulate import calibrate_delta_u, run_study, summarize_oc


def _design_from_options(**kw) -> DesignConfig:
    fields = {f.name for f in dataclasses.fields(DesignConfig)}
    return DesignConfig(**{k: v for k, v in kw.items()
                           if k in fields and v is not None})


def _mcmc_from_options(mcmc_iters, burn_in, chains) -> McmcConfig:
    base = McmcConfig()
    return McmcConfig(
        iterations=mcmc_iters or base.iterations,
        burn_in=burn_in if burn_in is not None else
        (mcmc_iters // 4 if mcmc_iters else base.burn_in),
        chains=chains or base.chains,
    )


def _common_design_options(fn):
    for opt in (
        click.option("--delta-u", "delta_u", type=float, default=None,
                     help="Rejection threshold for the final test."),
        click.option("--grid-size", "grid_size", type=int, default=None,
                     help="MTD-curve grid discretization."),
        click.option("--n1", type=int, default=None),
        click.option("--n2", type=int, default=None),
        click.option("--mcmc-iters", "mcmc_iters", type=int, default=None,
                     help="MCMC iterations per refit."),
        click.option("--burn-in", "burn_in", type=int, default=None),
        click.option("--chains", type=int, default=None),
    ):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Two-stage phase I-II dose-combination design engine and simulator."""


@main.command()
@click.argument("scenario")
@click.option("--j", type=int, default=200, show_default=True,
              help="Number of simulated trials.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default="oc_out", show_default=True)
@click.option("--no-figures", is_flag=True, default=False)
@_common_design_options
def simulate(scenario, j, seed, workers, out, no_figures, mcmc_iters,
             burn_in, chains, **design_kw):
    """Simulate J trials under SCENARIO (file path or builtin name).

    Writes oc_report.json, profile and per-trial CSVs, the recommended-dose
    cloud, and rendered figures into --out.
    """
    try:
        sc = load_scenario(scenario)
    except ScenarioError as exc:
        raise click.ClickException(f"invalid scenario: {exc}")
    design = _design_from_options(**design_kw)
    mcmc = _mcmc_from_options(mcmc_iters, burn_in, chains)
    results = run_study(sc, j, seed, design=design, mcmc=mcmc, workers=workers)
    report = summarize_oc(results, sc, design)
    files = write_report(report, results, Path(out), figures=not no_figures)
    for f in files:
        click.echo(f"wrote {f}")
    click.echo(f"rejection rate: {report.rejection_rate:.3f}  "
               f"avg DLT rate: {report.average_dlt_rate:.3f}")


@main.command()
@click.argument("scenario")
@click.option("--j", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--target", type=float, default=0.2, show_default=True,
              help="Target type-I error.")
@click.option("--candidates", default="0.5:0.95:0.05", show_default=True,
              help="Threshold grid as lo:hi:step.")
@_common_design_options
def calibrate(scenario, j, seed, workers, target, candidates, mcmc_iters,
              burn_in, chains, **design_kw):
    """Calibrate delta_u on an H0 scenario to a target type-I error."""
    try:
        sc = load_scenario(scenario)
    except ScenarioError as exc:
        raise click.ClickException(f"invalid scenario: {exc}")
    if sc.hypothesis != "H0":
        click.echo("warning: calibration scenario is not H0; the sweep "
                   "estimates the rejection rate, not type-I error", err=True)
    lo, hi, step = (float(v) for v in candidates.split(":"))
    grid = list(np.arange(lo, hi + step / 2, step))
    design = _design_from_options(**design_kw)
    mcmc = _mcmc_from_options(mcmc_iters, burn_in, chains)
    results = run_study(sc, j, seed, design=design, mcmc=mcmc, workers=workers)
    delta_u, err, met = calibrate_delta_u(results, grid, target)
    if not met:
        click.echo(f"warning: no candidate met target {target}; closest is "
                   f"{delta_u} with type-I error {err:.3f}", err=True)
    click.echo(f"delta_u = {delta_u:.3f}  (estimated type-I error {err:.3f}, "
               f"J = {j})")


@main.command("scenarios")
@click.option("--out", type=click.Path(), default="scenarios", show_default=True)
def scenarios_cmd(out):
    """Write the sixteen bundled scenario files as JSON."""
    write_builtin_fixtures(Path(out))
    click.echo(f"wrote bundled scenarios to {out}/")


@main.command()
@click.option("--out", "state_file", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--window", default=None,
              help="Raw dose window as x_min:x_max:y_min:y_max "
                   "(default cisplatin 50:100 / cabazitaxel 10:25).")
@click.option("--conduct-mcmc/--fast-mcmc", default=True,
              help="Use the stronger 4-chain conduct MCMC defaults.")
@_common_design_options
def init(state_file, seed, window, conduct_mcmc, mcmc_iters, burn_in, chains,
         **design_kw):
    """Create a fresh conduct-mode trial state file."""
    win = DEFAULT_WINDOW
    if window:
        parts = [float(v) for v in window.split(":")]
        if len(parts) != 4:
            raise click.ClickException("window must be x_min:x_max:y_min:y_max")
        win = DoseWindow(*parts)
    design = _design_from_options(**design_kw)
    if mcmc_iters or burn_in or chains:
        mcmc = _mcmc_from_options(mcmc_iters, burn_in, chains)
    else:
        mcmc = CONDUCT_MCMC if conduct_mcmc else McmcConfig()
    state = new_trial(design, window=win, seed=seed, mcmc=mcmc)
    write_state(state, Path(state_file))
    click.echo(f"initialized trial state at {state_file}")
    _print_pending(state)


def _print_pending(state):
    if not state.pending:
        click.echo(f"no pending assignments (phase: {state.phase})")
        return
    click.echo(f"phase {state.phase}, cohort {state.pending[0].cohort} of "
               f"stage {state.pending[0].stage}; pending assignments:")
    for a in state.pending:
        raw_x, raw_y = destandardize(a.dose, state.window)
        click.echo(f"  patient {a.index}: x = {raw_x:.2f} mg/m2 "
                   f"(std {a.dose.x:.4f}), y = {raw_y:.2f} mg/m2 "
                   f"(std {a.dose.y:.4f})")


@main.command("next-dose")
@click.argument("state_file", type=click.Path(exists=True))
@click.option("--outcomes", "outcomes_file", type=click.Path(exists=True),
              default=None,
              help="JSON file with the pending cohort's outcomes: "
                   '{"outcomes": [{"z": 0, "e": 1}, ...]}. Omit to just '
                   "display the pending assignments.")
def next_dose(state_file, outcomes_file):
    """Record a cohort's outcomes and print the next assignments.

    The state file is only rewritten after a successful advance.
    """
    state = read_state(Path(state_file))
    if outcomes_file is None:
        _print_pending(state)
        return
    if not state.is_active:
        raise click.ClickException(f"trial is not active (phase {state.phase})")
    doc = json.loads(Path(outcomes_file).read_text())
    entries = doc.get("outcomes")
    if not isinstance(entries, list):
        raise click.ClickException('outcomes file must contain an "outcomes" list')
    outcomes = []
    for i, o in enumerate(entries):
        if not isinstance(o, dict) or o.get("z") not in (0, 1) \
                or o.get("e") not in (0, 1, None):
            raise click.ClickException(f"outcomes[{i}] must have z in {{0,1}} "
                                       f"and e in {{0,1,null}}")
        outcomes.append((o["z"], o.get("e")))
    if len(outcomes) != len(state.pending):
        raise click.ClickException(
            f"expected {len(state.pending)} outcomes, got {len(outcomes)}; "
            "state file unchanged")
    try:
        advance(state, outcomes)
    except (PhaseError, ValueError) as exc:
        raise click.ClickException(str(exc))
    write_state(state, Path(state_file))
    if state.is_active:
        _print_pending(state)
    else:
        click.echo(f"trial is no longer active: phase {state.phase}"
                   + (f" ({state.stop_reason})" if state.stop_reason else ""))


@main.command()
@click.argument("state_file", type=click.Path(exists=True))
def decide(state_file):
    """Final test and optimal-dose recommendation for a finished trial."""
    state = read_state(Path(state_file))
    if state.is_active:
        raise click.ClickException(
            f"trial still active (phase {state.phase}); decision unavailable")
    decision = final_decision(state)
    if decision.stop_reason:
        click.echo(f"accept H0 (stopped: {decision.stop_reason})")
        return
    if decision.no_recommendation_reason:
        click.echo(f"no recommendation: {decision.no_recommendation_reason}")
        return
    verdict = "reject H0" if decision.reject_h0 else "accept H0"
    raw_x, raw_y = destandardize(decision.opt_dose, state.window)
    click.echo(f"{verdict} (max exceedance {decision.max_exceedance:.3f} vs "
               f"delta_u {decision.delta_u:.2f})")
    click.echo(f"optimal dose: x = {raw_x:.2f} mg/m2 (std "
               f"{decision.opt_dose.x:.4f}), y = {raw_y:.2f} mg/m2 (std "
               f"{decision.opt_dose.y:.4f}); exceedance "
               f"{decision.opt_exceedance:.3f}")


@main.command()
@click.option("--port", type=int, default=8411, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", type=click.Path(), default=None,
              help="Session store directory (default $COMBODOSE_STORE or "
                   "./combodose-sessions).")
def serve(port, host, store):
    """Run the JSON-over-HTTP conduct service for the dashboard."""
    import uvicorn

    from .service import create_app

    app = create_app(store_dir=store)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()

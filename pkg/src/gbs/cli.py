"""Command-line entry point.

Subcommands: simulate | bench | serve | verify | export. Simulation and
benchmarking run in-process (they are batch jobs); `serve` hosts the HTTP
service; `simulate --service-url` and `export --service-url` act as thin
clients of a running service. Precedence for settings: defaults, then
flags, then values from --config (a config file pins a run completely,
which keeps benchmark grids reproducible).

Exit codes: 0 success, 1 failure, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from .core import SurveyConfig, run_single_product, write_trace_jsonl
from .evaluation import (
    BenchmarkConfig,
    PERSONALIZED_METHODS,
    SINGLE_PRODUCT_METHODS,
    policy_utility,
    product_rank,
    run_benchmark,
    test_utility,
    write_results,
)
from .policy import PolicyConfig, policy_products, run_policy_learning, write_policy_trace_jsonl
from .population import (
    MixtureSpec,
    PopulationSpec,
    TYPE_BY_NUMBER,
    generate_population,
    holdout_population,
    population_answer_fn,
    save_population,
)


def _apply_config_file(params: dict, config_path: str | None) -> dict:
    """Config file overrides flags overrides defaults."""
    if not config_path:
        return params
    with open(config_path, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    unknown = set(overrides) - set(params)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    params.update(overrides)
    return params


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)


@click.group()
def main():
    """Adaptive paired-comparison surveys for binary-attribute products."""


@main.command()
@click.option("--k", default=10, show_default=True, help="number of binary attributes")
@click.option("--type", "utility_type", default=1, show_default=True, type=click.IntRange(1, 3),
              help="simulated utility family (1 linear, 2 pairwise, 3 network)")
@click.option("--respondents", default=100, show_default=True)
@click.option("--n-q", default=10, show_default=True, help="questions per respondent")
@click.option("--eta", default=0.1, show_default=True, help="SGD stepsize")
@click.option("--init-std", default=1.0, show_default=True, help="std of the random logit init")
@click.option("--seed", default=0, show_default=True)
@click.option("--policy", "personalized", is_flag=True,
              help="learn a personalized policy on a mixture population")
@click.option("--policy-eta", default=0.01, show_default=True)
@click.option("--holdout", default=1000, show_default=True, help="hold-out population size")
@click.option("--service-url", default=None,
              help="drive a running survey service instead of simulating locally")
@click.option("--session-id", default=None,
              help="with --service-url: attach to an existing session")
@click.option("--out", "out_dir", default="runs/simulate", show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="JSON file overriding the other options")
def simulate(**params):
    """Run one adaptive survey against a simulated population."""
    params = _apply_config_file(params, params.pop("config_path"))
    out_dir = params["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "config_snapshot.json"), params)

    k = params["k"]
    utype = TYPE_BY_NUMBER[params["utility_type"]]
    mixture = MixtureSpec() if params["personalized"] else None
    if params["personalized"] and params["utility_type"] != 2:
        raise click.UsageError("--policy runs require --type 2 (mixture populations)")
    pop = generate_population(
        PopulationSpec(k=k, size=params["respondents"] or 1, utility_type=utype,
                       mixture=mixture, seed=params["seed"])
    )
    test_pop = holdout_population(pop, params["holdout"], params["seed"] + 1_000_003)
    save_population(pop, os.path.join(out_dir, "population.json"))

    t0 = time.perf_counter()
    report: dict = {"k": k, "utility_type": params["utility_type"], "seed": params["seed"]}
    if params["service_url"] and params["personalized"]:
        raise click.UsageError("--policy is not supported with --service-url")
    if params["service_url"]:
        report.update(_simulate_via_service(params, pop, out_dir))
        product = np.asarray(report["product"], dtype=np.int64)
        report["test_utility"] = test_utility(product, test_pop)
        if k <= 20:
            report["rank"] = product_rank(product, test_pop)
    elif params["personalized"]:
        pc = PolicyConfig(k=k, covariate_dim=k, respondents=params["respondents"],
                          n_q=params["n_q"], eta=params["policy_eta"], seed=params["seed"])
        result = run_policy_learning(pc, pop)
        write_policy_trace_jsonl(result.trace, os.path.join(out_dir, "trace.jsonl"))
        result.policy.save(os.path.join(out_dir, "policy.json"))
        report["policy_utility"] = policy_utility(
            lambda X: policy_products(result.policy, X), test_pop
        )
        report["questions"] = len(result.trace)
    else:
        sc = SurveyConfig(k=k, respondents=params["respondents"], n_q=params["n_q"],
                          eta=params["eta"], seed=params["seed"],
                          phi_init_std=params["init_std"])
        result = run_single_product(sc, population_answer_fn(pop))
        write_trace_jsonl(result.trace, os.path.join(out_dir, "trace.jsonl"))
        report["product"] = result.product.tolist()
        report["phi_final"] = result.phi_final.tolist()
        report["test_utility"] = test_utility(result.product, test_pop)
        if k <= 20:
            report["rank"] = product_rank(result.product, test_pop)
        report["questions"] = len(result.trace)
    report["runtime_s"] = round(time.perf_counter() - t0, 3)
    _write_json(os.path.join(out_dir, "report.json"), report)
    click.echo(json.dumps(report, indent=1))


def _simulate_via_service(params: dict, pop, out_dir: str) -> dict:
    """Thin-client mode: enroll and drive simulated respondents over HTTP."""
    from .client import SurveyClient, drive_simulated_respondents

    client = SurveyClient(params["service_url"])
    if not client.health():
        raise click.ClickException(f"service at {params['service_url']} is not reachable")
    session_id = params.get("session_id")
    token = None
    if session_id is None:
        created = client.create_session(
            [f"attr_{i}" for i in range(params["k"])],
            {"eta": params["eta"], "n_q": params["n_q"], "seed": params["seed"],
             "phi_init_std": params["init_std"]},
        )
        session_id = created["session_id"]
        token = created["token"]
    rng = np.random.default_rng(params["seed"] + 17)
    counts = drive_simulated_respondents(
        client, session_id, pop, params["respondents"], params["n_q"], rng
    )
    state = client.state(session_id, token)
    with open(os.path.join(out_dir, "trace.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(client.export(session_id, token))
    client.close()
    return {
        "session_id": session_id,
        "product": state["extracted_product"],
        "questions": state["question_count"],
        "human_answers": state["human_answers"],
        "driver_counts": counts,
    }


@main.command()
@click.option("--k", default=10, show_default=True)
@click.option("--types", default="1,2,3", show_default=True,
              help="comma-separated utility types")
@click.option("--methods", default="gbs,logistic,hb,nn", show_default=True)
@click.option("--budgets", default="10,30,70,100", show_default=True)
@click.option("--trials", default=10, show_default=True)
@click.option("--n-q", default=10, show_default=True)
@click.option("--eta", default=0.1, show_default=True)
@click.option("--seed", "base_seed", default=0, show_default=True)
@click.option("--holdout", default=1000, show_default=True)
@click.option("--personalized", is_flag=True)
@click.option("--jobs", default=1, show_default=True, help="worker pool size")
@click.option("--out", "out_dir", default="runs/bench", show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def bench(**params):
    """Sweep methods x utility types x budgets x trials; write CSV/JSON."""
    params = _apply_config_file(params, params.pop("config_path"))
    methods = tuple(m.strip() for m in str(params["methods"]).split(",") if m.strip())
    allowed = PERSONALIZED_METHODS if params["personalized"] else SINGLE_PRODUCT_METHODS
    for m in methods:
        if m not in allowed:
            raise click.UsageError(f"unknown method {m!r}; expected one of {sorted(allowed)}")
    try:
        cfg = BenchmarkConfig(
            k=params["k"],
            utility_types=tuple(int(t) for t in str(params["types"]).split(",") if t.strip()),
            methods=methods,
            budgets=tuple(int(b) for b in str(params["budgets"]).split(",") if b.strip()),
            trials=params["trials"],
            n_q=params["n_q"],
            eta=params["eta"],
            holdout_size=params["holdout"],
            base_seed=params["base_seed"],
            personalized=params["personalized"],
            jobs=params["jobs"],
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    done = {"n": 0}
    total = len(cfg.utility_types) * cfg.trials * len(cfg.budgets) * len(cfg.methods)

    def progress(rep):
        done["n"] += 1
        click.echo(
            f"[{done['n']}/{total}] {rep.method} type{rep.utility_type} "
            f"N={rep.n_respondents} trial={rep.trial}"
            + (f" ERROR: {rep.error}" if rep.error else ""),
            err=True,
        )

    reports = run_benchmark(cfg, progress=progress)
    paths = write_results(reports, params["out_dir"], cfg)
    click.echo(json.dumps(paths, indent=1))
    # nn rows legitimately fail at K > 20 (enumeration refused); anything else is a failure
    if any(r.error and "enumeration infeasible" not in r.error for r in reports):
        sys.exit(1)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default="survey_data", show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def serve(**params):
    """Host live survey sessions over HTTP."""
    params = _apply_config_file(params, params.pop("config_path"))
    import uvicorn

    from .service import create_app

    app = create_app(params["data_dir"])
    uvicorn.run(app, host=params["host"], port=params["port"], log_level="warning")


@main.command()
@click.option("--mc-draws", default=1_000_000, show_default=True,
              help="Monte-Carlo draws for the sampling-based checks")
@click.option("--seed", default=20240, show_default=True)
def verify(mc_draws, seed):
    """Run the analytic identity suite; nonzero exit on any failure."""
    from .verify import run_all_checks

    results = run_all_checks(mc_draws=mc_draws, seed=seed)
    for res in results:
        click.echo(res.line())
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--session-id", required=True)
@click.option("--service-url", default=None, help="export from a running service")
@click.option("--data-dir", default=None, type=click.Path(exists=True),
              help="export directly from a service data directory")
@click.option("--token", default=None, help="session bearer token, if required")
@click.option("--out", "out_path", default=None, help="output file (default: stdout)")
def export(session_id, service_url, data_dir, token, out_path):
    """Dump a session's full event log as JSON lines."""
    if bool(service_url) == bool(data_dir):
        raise click.UsageError("pass exactly one of --service-url or --data-dir")
    if service_url:
        from .client import SurveyClient

        client = SurveyClient(service_url)
        text = client.export(session_id, token)
        client.close()
    else:
        path = os.path.join(data_dir, f"{session_id}.events.jsonl")
        if not os.path.exists(path):
            raise click.ClickException(f"no event log for session {session_id}")
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(out_path)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()

"""Command-line front end: single runs, the comparison sweep, oracle checks.

Exit codes: 0 success, 1 oracle/property failure, 2 configuration error,
3 infeasible scenario.  Metrics are emitted as one CSV per run; sweep plots
are static SVG files rendered purely from those CSVs, so regeneration with
``--plots-only`` is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .config import ConfigError, ExperimentConfig, parse_config
from .exceptions import InfeasibleScenarioError
from .oracle import run_bnb_oracle_suite, run_gradient_suite
from .policies import PolicyKind
from .simulate import RunMetrics, run_simulation

POLICY_TOKENS = {
    "mpc": PolicyKind.MPC,
    "greedy": PolicyKind.GREEDY,
    "single-plc": PolicyKind.SINGLE_PLC,
    "single-lte": PolicyKind.SINGLE_LTE,
}
SWEEP_RATES = (200.0, 2000.0, 4000.0)
CSV_HEADER = "step,throughput_cum_bits,buffer_bits,loss_rate,rb_consumed,violations"


def metrics_csv_text(metrics: RunMetrics) -> str:
    lines = [CSV_HEADER]
    for i in range(metrics.duration_steps):
        lines.append(
            f"{i},{metrics.throughput_cum_bits[i]!r},{metrics.buffer_depth_bits[i]!r},"
            f"{metrics.packet_loss_rate[i]!r},{metrics.rb_consumed[i]!r},"
            f"{int(metrics.violations_per_step[i])}"
        )
    return "\n".join(lines) + "\n"


def run_csv_name(policy_token: str, rate: float, seed: int) -> str:
    return f"{policy_token}_d{rate:g}_seed{seed}.csv"


def write_metrics_csv(metrics: RunMetrics, path: str, policy_token: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv_text(metrics))


def cmd_run(config: ExperimentConfig, policy_token: str, seed_override, out_override) -> int:
    policy = POLICY_TOKENS[policy_token]
    scenario = config.build_scenario(seed=seed_override)
    metrics = run_simulation(scenario, policy)
    outdir = config.output_dir(out_override)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(
        outdir, run_csv_name(policy_token, scenario.traffic.mean_rate_bytes_per_s,
                             scenario.seed)
    )
    write_metrics_csv(metrics, path, policy_token)
    print(path)
    return 0


def _read_csv_series(path: str) -> dict[str, list[float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list[float]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in cols:
                cols[name].append(float(row[name]))
    return cols


_PLOT_SPECS = (
    ("throughput", "throughput_cum_bits", "cumulative throughput [bits]"),
    ("buffer", "buffer_bits", "buffer depth [bits]"),
    ("loss", "loss_rate", "packet loss rate"),
)


def render_plots(outdir: str, manifest: dict) -> list[str]:
    """Render the nine comparison plots from the sweep CSVs alone."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "hetsched"
    written = []
    for rate in SWEEP_RATES:
        runs = [
            entry for entry in manifest["runs"]
            if entry["mean_rate_bytes_per_s"] == rate and entry["status"] == "ok"
        ]
        for name, column, ylabel in _PLOT_SPECS:
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for entry in runs:
                series = _read_csv_series(os.path.join(outdir, entry["file"]))
                ax.plot(series["step"], series[column], label=entry["policy"])
            ax.set_xlabel("step")
            ax.set_ylabel(ylabel)
            ax.set_title(f"{name} at d={rate:g} bytes/s")
            ax.legend()
            fig.tight_layout()
            path = os.path.join(outdir, f"{name}_d{rate:g}.svg")
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written


def cmd_sweep(config: ExperimentConfig, plots_only: bool, out_override) -> int:
    outdir = config.output_dir(out_override)
    os.makedirs(outdir, exist_ok=True)
    manifest_path = os.path.join(outdir, "manifest.json")

    if plots_only:
        if not os.path.exists(manifest_path):
            print("sweep manifest not found; run a full sweep first", file=sys.stderr)
            return 3
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    else:
        manifest = {"seed": config.scenario.seed, "runs": []}
        for rate in SWEEP_RATES:
            for token, policy in POLICY_TOKENS.items():
                scenario = config.build_scenario(mean_rate_bytes_per_s=rate)
                entry = {
                    "policy": token,
                    "mean_rate_bytes_per_s": rate,
                    "seed": scenario.seed,
                    "file": run_csv_name(token, rate, scenario.seed),
                }
                try:
                    metrics = run_simulation(scenario, policy)
                except InfeasibleScenarioError as exc:
                    entry["status"] = "infeasible"
                    entry["error"] = str(exc)
                else:
                    write_metrics_csv(metrics, os.path.join(outdir, entry["file"]), token)
                    entry["status"] = "ok"
                manifest["runs"].append(entry)
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    if config.output.plots or plots_only:
        plots = render_plots(outdir, manifest)
        manifest["plots"] = [os.path.basename(p) for p in plots]
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    failures = [e for e in manifest["runs"] if e["status"] != "ok"]
    if failures:
        print(
            f"{len(failures)} run(s) failed; see {manifest_path}", file=sys.stderr
        )
        return 3
    return 0


def cmd_oracle_check(config: ExperimentConfig) -> int:
    oc = config.oracle
    suites = [
        run_bnb_oracle_suite(
            instances=oc.instances, n_sensors=oc.sensors, horizon=oc.horizon,
            base_seed=oc.seed,
        ),
        run_gradient_suite(
            instances=oc.gradient_instances, n_sensors=oc.sensors,
            horizon=oc.horizon, base_seed=oc.seed + 1,
        ),
    ]
    all_ok = True
    for suite in suites:
        print(suite.summary())
        all_ok &= suite.all_passed
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetsched",
        description="Uplink scheduling simulator for a wired+wireless sensor platform",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one policy and write its metrics CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--policy", required=True, choices=sorted(POLICY_TOKENS))
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)

    p_sweep = sub.add_parser(
        "sweep", help="run all policies over d in {200, 2000, 4000} bytes/s"
    )
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--plots-only", action="store_true")
    p_sweep.add_argument("--out", default=None)

    p_oracle = sub.add_parser(
        "oracle-check", help="run the search-vs-enumeration and gradient suites"
    )
    p_oracle.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.command == "run":
            return cmd_run(config, args.policy, args.seed, args.out)
        if args.command == "sweep":
            return cmd_sweep(config, args.plots_only, args.out)
        return cmd_oracle_check(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleScenarioError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

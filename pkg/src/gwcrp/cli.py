"""Command-line interface: ``gwcrp {fit,select,simulate,evaluate}``.

Exit codes: 0 success, 1 internal error, 2 input or data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import io, plotting
from .errors import DataError
from .graph import normalize_kernel
from .pipeline import DEFAULT_H_GRID, auto_cutpoints, fit, select, summary_json
from .sampler import GwcrpConfig
from .simulation import generate_dataset, load_design, replicate_rng
from .survival import HazardPartition

log = logging.getLogger("gwcrp")

EXIT_OK, EXIT_INTERNAL, EXIT_DATA = 0, 1, 2


@dataclass
class RunConfig:
    command: str = "fit"
    data: str | None = None
    graph: str | None = None
    design: str | None = None
    cutpoints: list | None = None
    auto_cutpoints: int | None = None
    h: float | None = None
    h_grid: list | None = None
    j_grid: list | None = None
    alpha: float = 1.0
    sigma0: float = 100.0
    iters: int = 2000
    burnin: int = 500
    seed: int = 0
    threads: int = 1
    kernel: str = "exp"
    init: str = "singletons"
    replicates: int | None = None
    full: bool = False
    plots: bool = True
    out: str | None = None

    def mcmc(self, h: float = 0.0) -> GwcrpConfig:
        return GwcrpConfig(alpha=self.alpha, h=h, prior_variance=self.sigma0, iterations=self.iters,
                           burn_in=self.burnin, seed=self.seed, init=self.init)


def _floats(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            # start:step:stop, inclusive of stop
            a, s, b = (float(v) for v in part.split(":"))
            n = int(round((b - a) / s))
            out += [round(a + k * s, 10) for k in range(n + 1)]
        else:
            out.append(float(part))
    return out


def _ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gwcrp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--threads", type=int, default=S)
    common.add_argument("--alpha", type=float, default=S)
    common.add_argument("--sigma0", type=float, default=S, help="prior variance v0 of the N(0, v0 I) base measure")
    common.add_argument("--iters", type=int, default=S)
    common.add_argument("--burnin", type=int, default=S)
    common.add_argument("--kernel", choices=["exp", "sqexp"], default=S)
    common.add_argument("--init", choices=["singletons", "one"], default=S)
    common.add_argument("--no-plots", dest="plots", action="store_false", default=S)
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=S, help="survival CSV: region,time,event,x1,...")
    data.add_argument("--graph", default=S, help="adjacency edge list")
    data.add_argument("--cutpoints", type=_floats, default=S, help="comma-separated cut points")
    data.add_argument("--auto-cutpoints", type=int, default=S, metavar="J",
                      help="place J-1 cut points at event-time quantiles up to the median")
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--h-grid", type=_floats, default=S, help="e.g. 0:0.2:2,3:1:10")
    design = argparse.ArgumentParser(add_help=False)
    design.add_argument("--design", default=S, help="design JSON or bundled name design1..design4")
    design.add_argument("--replicates", type=int, default=S)
    design.add_argument("--full", action="store_true", default=S, help="100 replicates")

    p = sub.add_parser("fit", parents=[common, data], help="fit one (h, J)")
    p.add_argument("--h", type=float, default=S)
    sub.add_parser("select", parents=[common, data, grid], help="LPML grid search over h and J").add_argument(
        "--j-grid", type=_ints, default=S)
    sub.add_parser("simulate", parents=[common, design], help="write replicate datasets")
    sub.add_parser("evaluate", parents=[common, design, grid], help="simulation study with LPML-selected h")
    return parser


def resolve_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    args.pop("verbose", None)
    cfg = {}
    if args.get("config"):
        path = Path(args.pop("config"))
        try:
            cfg = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        io.validate(cfg, "config")
    args.pop("config", None)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(cfg) - known
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg.update(args)
    rc = RunConfig(**cfg)
    if rc.out is None:
        raise DataError("--out is required")
    if rc.threads < 1 or rc.iters < 1 or not 0 <= rc.burnin < rc.iters:
        raise DataError("need threads >= 1 and 0 <= burnin < iters")
    return rc


def _load_inputs(rc: RunConfig):
    if not rc.data or not rc.graph:
        raise DataError("--data and --graph are required")
    for pth in (rc.data, rc.graph):
        if not Path(pth).exists():
            raise DataError(f"file not found: {pth}")
    return io.read_survival_csv(rc.data), io.read_graph(rc.graph)


def _partitions(rc: RunConfig, dataset, j_grid=None):
    if rc.cutpoints is not None and (rc.auto_cutpoints or j_grid):
        raise DataError("give either --cutpoints or --auto-cutpoints/--j-grid, not both")
    try:
        if rc.cutpoints is not None:
            return [HazardPartition(tuple(rc.cutpoints))]
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    js = j_grid or ([rc.auto_cutpoints] if rc.auto_cutpoints else None)
    if not js:
        raise DataError("need --cutpoints, --auto-cutpoints or --j-grid")
    return [HazardPartition(auto_cutpoints(dataset, J)) for J in sorted(set(js))]


def _echo_config(rc: RunConfig, out: Path):
    io.write_json(out / "config.json", asdict(rc))


def _write_fit(result, out: Path, plots: bool):
    io.write_json(out / "summary.json", summary_json(result))
    io.write_trace_ndjson(out / "trace.ndjson", result.trace)
    labels = result.summary.dahl_labels + 1
    io.write_csv(out / "cluster_map.csv", ["region", "label"], zip(result.region_ids, labels))
    p = result.summary.p
    rows = []
    for i, rid in enumerate(result.region_ids):
        est = result.summary.estimates[i]
        for a in range(est.size):
            name = f"beta{a + 1}" if a < p else f"log_lambda{a - p + 1}"
            lo, hi = result.summary.hpd[i, a]
            rows.append([rid, labels[i], name, est[a], lo, hi])
    io.write_csv(out / "estimates.csv", ["region", "cluster", "parameter", "estimate", "hpd_lower", "hpd_upper"], rows)
    if plots:
        plotting.k_trace(result.trace.k_all, result.config.burn_in, out / "k_trace.png")


def cmd_fit(rc: RunConfig) -> int:
    out = Path(rc.out)
    dataset, graph = _load_inputs(rc)
    parts = _partitions(rc, dataset)
    if len(parts) != 1:
        raise DataError("fit takes a single J")
    h = rc.h if rc.h is not None else (rc.h_grid[0] if rc.h_grid and len(rc.h_grid) == 1 else 0.0)
    result = fit(dataset, graph, parts[0], rc.mcmc(h), normalize_kernel(rc.kernel))
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out)
    _write_fit(result, out, rc.plots)
    log.info("k_hat=%d LPML=%.3f", result.summary.k_hat, result.summary.lpml)
    return EXIT_OK


def cmd_select(rc: RunConfig) -> int:
    out = Path(rc.out)
    dataset, graph = _load_inputs(rc)
    parts = _partitions(rc, dataset, rc.j_grid)
    h_grid = rc.h_grid if rc.h_grid else list(DEFAULT_H_GRID)
    res = select(dataset, graph, h_grid, parts, rc.mcmc(), normalize_kernel(rc.kernel), threads=rc.threads)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out)
    io.write_csv(out / "lpml_grid.csv", ["h", "J", "LPML", "k_hat", "status"],
                 ([c.h, c.J, c.lpml if c.lpml is not None else "", c.k_hat or "", c.status] for c in res.cells))
    _write_fit(res.best, out, rc.plots)
    if rc.plots:
        plotting.lpml_grid(res.cells, out / "lpml.png")
    log.info("selected h=%g J=%d", res.best.h, res.best.J)
    return EXIT_OK


def _replicates(rc: RunConfig) -> int:
    if rc.replicates is not None:
        return rc.replicates
    return 100 if rc.full else 20


def cmd_simulate(rc: RunConfig) -> int:
    out = Path(rc.out)
    design = load_design(rc.design or "design1")
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out)
    io.write_design(out / "design.json", design)
    io.write_graph(out / "graph.txt", design.graph)
    io.write_csv(out / "true_cluster_map.csv", ["region", "label"],
                 zip(design.graph.region_ids, design.true_labels + 1))
    rows = []
    for r in range(_replicates(rc)):
        data = generate_dataset(design, replicate_rng(rc.seed, r))
        io.write_survival_csv(out / f"replicate_{r:03d}.csv", data)
        rows.append([r, data.censoring_rate()])
    io.write_csv(out / "replicates.csv", ["replicate", "censoring_rate"], rows)
    return EXIT_OK


def cmd_evaluate(rc: RunConfig) -> int:
    from .study import run_study

    out = Path(rc.out)
    design = load_design(rc.design or "design1")
    h_grid = rc.h_grid if rc.h_grid else list(DEFAULT_H_GRID)
    n_rep = _replicates(rc)
    study = run_study(design, n_rep, rc.seed, h_grid, rc.mcmc(), normalize_kernel(rc.kernel), rc.threads,
                      progress=lambda i, n: log.info("replicate %d/%d done", i, n))
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out)
    report = study.report()
    io.validate(report, "evaluation")
    io.write_json(out / "evaluation.json", report)
    rows_k, rows_ri, rows_lp = [], [], []
    for r in study.replicates:
        for k, h in enumerate(study.h_values):
            rows_k.append([r.replicate, h, r.k_hat[k]])
            rows_ri.append([r.replicate, f"h={h:g}", h, r.rand[k]])
            rows_lp.append([r.replicate, h, design.partition.pieces, r.lpml[k]])
        rows_ri.append([r.replicate, "optimal", r.h_star, r.rand[r.star]])
    io.write_csv(out / "k_hat.csv", ["replicate", "h", "k_hat"], rows_k)
    io.write_csv(out / "rand_index.csv", ["replicate", "method", "h", "rand_index"], rows_ri)
    io.write_csv(out / "lpml_grid.csv", ["replicate", "h", "J", "LPML"], rows_lp)
    io.write_csv(out / "selected_h.csv", ["replicate", "h", "k_hat", "rand_index", "censoring_rate"],
                 ([r.replicate, r.h_star, r.k_hat[r.star], r.rand[r.star], r.censoring_rate] for r in study.replicates))
    rows = []
    p = design.p
    J = design.partition.pieces
    for name, _, k in study.method_rows():
        m = report["methods"][name]
        if not study.replicates:
            continue
        for a in range(p):
            rows.append([name, f"beta{a + 1}", m["ab_beta"][a], m["amse_beta"][a]])
        for j in range(J):
            rows.append([name, f"log_lambda{j + 1}", m["ab_log_lambda"][j], m["amse_log_lambda"][j]])
            rows.append([name, f"lambda{j + 1}", m["ab_lambda"][j], m["amse_lambda"][j]])
        rows.append([name, "beta_mean", m["ab_beta_mean"], m["amse_beta_mean"]])
        rows.append([name, "log_lambda_mean", m["ab_log_lambda_mean"], m["amse_log_lambda_mean"]])
        rows.append([name, "lambda_mean", m["ab_lambda_mean"], m["amse_lambda_mean"]])
    io.write_csv(out / "ab_amse.csv", ["method", "parameter", "ab", "amse"], rows)
    if rc.plots and study.replicates:
        plotting.k_histograms(study, out / "k_hat_hist.png")
        plotting.rand_boxplots(study, out / "rand_index.png")
    if study.failures:
        log.warning("%d of %d replicates failed; aggregates use %d", len(study.failures), n_rep,
                    len(study.replicates))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = resolve_config(argv)
        return COMMANDS[rc.command](rc)
    except DataError as exc:
        print(f"gwcrp: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"gwcrp: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

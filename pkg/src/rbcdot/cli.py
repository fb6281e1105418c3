"""Command line harness: ``gen``, ``solve``, ``bench``, ``oracle``, ``nullspace``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import closed_form_1d
from .core import TransportPlan, estimate_vhat
from .datasets import FAMILIES, DatasetSpec, GeneratedInstance, from_json, generate, to_json
from .nullspace import NullSpaceError, conformal_realization
from .rbcd import VARIANTS, ConfigError, InexactSchedule, RunAborted, RunConfig, run
from .subsolver import SubsolverError, solve_full
from .working_set import SelectionError, SelectorConfig

log = logging.getLogger("rbcdot")

TRAJ_SCHEMA = "rbcdot.trajectory/1"
SUMMARY_SCHEMA = "rbcdot.summary/1"
CSV_COLUMNS = ("iteration", "objective", "gap", "feasibility_error", "support", "kind", "time")
ORACLE_MAX_N = 3000
VHAT_SPAN = 1000

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class OracleError(RuntimeError):
    pass


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             check=True, cwd=Path(__file__).resolve().parent)
        return out.stdout.strip()
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def reference_value(gen: GeneratedInstance, policy) -> float:
    """Optimal value in normalized cost units under the given reference policy."""
    if isinstance(policy, (int, float)):
        return float(policy)
    if isinstance(policy, dict) and "value" in policy:
        return float(policy["value"])
    inst = gen.instance
    if policy == "closed_form_1d":
        if gen.source.shape[1] != 1 or inst.cost.p_exp != 2:
            raise OracleError("closed_form_1d needs 1-d points and squared distance")
        _, raw = closed_form_1d(gen.source[:, 0], inst.r1, gen.target[:, 0], inst.r2)
        return raw / inst.cost.raw_max
    if policy == "solve_full":
        if inst.n > ORACLE_MAX_N:
            raise OracleError(f"solve_full refused for n={inst.n} > {ORACLE_MAX_N}")
        return solve_full(inst)[1]
    raise ConfigError(f"unknown reference policy {policy!r}")


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    runs: list
    repetitions: int = 5
    output_dir: str = "results"
    reference: object = "solve_full"
    master_seed: int = 0
    record_stride: Optional[int] = None
    workers: int = 1
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        ds = doc.get("dataset")
        if not isinstance(ds, dict):
            raise ConfigError("experiment needs a 'dataset' mapping")
        runs = doc.get("runs") or []
        if not runs:
            raise ConfigError("experiment needs at least one run")
        cfg = cls(DatasetSpec(**ds), list(runs), int(doc.get("repetitions", 5)),
                  doc.get("output_dir", "results"), doc.get("reference", "solve_full"),
                  int(doc.get("master_seed", 0)), doc.get("record_stride"),
                  int(doc.get("workers", 1)))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        self.dataset.validate()
        for r in self.runs:
            if "name" not in r:
                raise ConfigError("every run needs a name")
            make_run_config(r, self.dataset.n, seed=0)


def make_run_config(entry: dict, n: int, seed: int, f_star=None) -> RunConfig:
    sel = SelectorConfig(n=n, l=entry.get("l"), p=entry.get("p"), m=entry.get("m"),
                         s=entry.get("s", 0.1), T=entry.get("T", 10), seed=seed)
    inex = entry.get("inexact")
    sched = InexactSchedule(**inex) if inex else None
    return RunConfig(sel, variant=entry.get("variant", "arbcd"), inexact=sched,
                     max_iters=int(entry.get("max_iters", 5000)),
                     f_star=f_star if entry.get("target_gap") is not None else None,
                     target_gap=entry.get("target_gap"),
                     relative_gap=entry.get("relative_gap", True),
                     round_each_iter=entry.get("round_each_iter", False),
                     init=entry.get("init", "auto"))


def derive_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([master, *path]).generate_state(1)[0])


def write_trajectory_csv(path: Path, traj, f_star: float, stride: int, master_seed: int,
                         seed: int) -> None:
    buf = io.StringIO()
    buf.write(f"# schema={TRAJ_SCHEMA} master_seed={master_seed} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    last = len(traj) - 1
    for idx, (k, obj, feas, sup, kind, t) in enumerate(traj.rows()):
        if idx % stride and idx != last:
            continue
        w.writerow([k, repr(obj), repr(obj - f_star), repr(feas), sup, kind, f"{t:.6f}"])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _one_run(args):
    gen, entry, seed, f_star = args
    cfg = make_run_config(entry, gen.instance.n, seed, f_star)
    _, traj = run(gen.instance, cfg)
    return traj, cfg.metadata


def mean_gap_curve(trajs, f_star: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean gap per iteration; shorter runs (early stop) hold their last value."""
    length = max(t.iteration[-1] for t in trajs) + 1
    out = np.zeros(length)
    for t in trajs:
        g = np.asarray(t.objective) - f_star
        full = np.empty(length)
        full[np.asarray(t.iteration)] = g
        # fill unrecorded indices with the latest recorded value
        rec = np.zeros(length, dtype=bool)
        rec[np.asarray(t.iteration)] = True
        idx = np.where(rec, np.arange(length), 0)
        np.maximum.accumulate(idx, out=idx)
        out += full[idx]
    return np.arange(length), out / len(trajs)


def vhat_table(mean_gap: np.ndarray, c_max: float, span: int = VHAT_SPAN) -> list:
    rows = []
    for k in range(0, mean_gap.size, span):
        row = {"iteration": k, "scaled_gap": float(mean_gap[k] * c_max), "vhat": None}
        if k >= span:
            a, b = mean_gap[k - span], mean_gap[k]
            if a > 0 and 0 < b <= a:
                row["vhat"] = estimate_vhat(a, b, span)
        rows.append(row)
    return rows


def run_experiment(config: ExperimentConfig) -> dict:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    gen = generate(config.dataset)
    f_star = reference_value(gen, config.reference)
    c_max = gen.c_max
    jobs, keys = [], []
    for ri, entry in enumerate(config.runs):
        for rep in range(config.repetitions):
            seed = derive_seed(config.master_seed, ri, rep)
            jobs.append((gen, entry, seed, f_star))
            keys.append((entry["name"], rep, seed))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]

    summary = {"schema": SUMMARY_SCHEMA, "master_seed": config.master_seed,
               "dataset": gen.metadata, "f_star": f_star, "c_max": c_max, "runs": {}}
    wall = {"schema": SUMMARY_SCHEMA, "master_seed": config.master_seed}
    by_name: dict = {}
    for (name, rep, seed), (traj, meta) in zip(keys, results):
        stride = config.record_stride or (10 if len(traj) > 100_000 else 1)
        write_trajectory_csv(out / f"{name}_rep{rep}.csv", traj, f_star, stride,
                             config.master_seed, seed)
        by_name.setdefault(name, []).append((traj, meta, seed))
    for name, items in by_name.items():
        trajs = [t for t, _, _ in items]
        its, mg = mean_gap_curve(trajs, f_star)
        finals = [t.objective[-1] - f_star for t in trajs]
        summary["runs"][name] = {
            "seeds": [s for _, _, s in items],
            "metadata": items[0][1],
            "mean_gap": mg.tolist(),
            "vhat": vhat_table(mg, c_max),
            "final_gap_mean": float(np.mean(finals)),
            "final_gap_scaled_mean": float(np.mean(finals) * c_max),
            "final_relative_gap_mean": float(np.mean(finals) / f_star) if f_star else None,
            "iterations": [t.iteration[-1] for t in trajs],
        }
        wall[name] = {"final_time_mean": float(np.mean([t.time[-1] for t in trajs]))}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True),
                                      encoding="utf-8")
    meta = {"schema": SUMMARY_SCHEMA, "master_seed": config.master_seed,
            "git_revision": git_revision(), "dataset": gen.metadata,
            "runs": config.runs, "repetitions": config.repetitions,
            "reference": config.reference}
    (out / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True, default=str),
                                       encoding="utf-8")
    (out / "timing.json").write_text(json.dumps(wall, indent=1, sort_keys=True),
                                     encoding="utf-8")
    return summary


# -- argument parsing ---------------------------------------------------------

def _add_dataset_args(p):
    p.add_argument("--instance", help="instance JSON written by 'gen'")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-exp", type=float, default=2.0)
    p.add_argument("--variant-data", dest="data_variant")


def _load_instance(args) -> GeneratedInstance:
    if args.instance:
        return from_json(Path(args.instance).read_text(encoding="utf-8"))
    if not args.family or not args.n:
        raise ConfigError("give --instance or both --family and --n")
    return generate(DatasetSpec(args.family, args.n, args.seed, args.p_exp, args.data_variant))


def cmd_gen(args) -> int:
    spec = DatasetSpec(args.family, args.n, args.seed, args.p_exp, args.data_variant)
    text = to_json(generate(spec), spec)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    gen = _load_instance(args)
    f = reference_value(gen, args.method)
    print(json.dumps({"f_star": f, "f_star_raw": f * gen.c_max, "method": args.method}))
    return EXIT_OK


def cmd_solve(args) -> int:
    gen = _load_instance(args)
    f_star = None
    if args.reference:
        f_star = reference_value(gen, args.reference)
    entry = {"variant": args.variant, "m": args.m, "p": args.p, "s": args.s, "T": args.T,
             "l": args.l, "max_iters": args.max_iters, "target_gap": args.target_gap,
             "round_each_iter": args.round_each_iter, "init": args.init}
    if args.inexact_eps is not None:
        entry["inexact"] = {"eps0": args.inexact_eps, "kind": args.inexact_kind}
    if args.target_gap is not None and f_star is None:
        raise ConfigError("--target-gap needs --reference")
    cfg = make_run_config(entry, gen.instance.n, args.run_seed, f_star)
    plan, traj = run(gen.instance, cfg)
    ref = f_star if f_star is not None else float("nan")
    if args.output:
        write_trajectory_csv(Path(args.output), traj, ref, args.stride, args.run_seed,
                             args.run_seed)
    print(json.dumps({"objective": traj.objective[-1], "f_star": f_star,
                      "iterations": traj.iteration[-1], "support": plan.nnz,
                      "feasibility_error": traj.feasibility[-1], "metadata": cfg.metadata}))
    return EXIT_OK


def cmd_bench(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.output_dir:
        doc["output_dir"] = args.output_dir
    if args.workers:
        doc["workers"] = args.workers
    cfg = ExperimentConfig.from_dict(doc)
    summary = run_experiment(cfg)
    for name, r in summary["runs"].items():
        print(f"{name}: final gap {r['final_gap_mean']:.3e}")
    return EXIT_OK


def _load_plan(path: str) -> TransportPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return TransportPlan(doc["n"], doc["rows"], doc["cols"], doc["vals"])


def cmd_nullspace(args) -> int:
    if args.random:
        rng = np.random.default_rng(args.seed)
        n = args.random
        a, b = rng.random((n, n)), rng.random((n, n))
        d = a - b
        # double centering removes row and column sums
        D = d - d.mean(0) - d.mean(1)[:, None] + d.mean()
    elif args.plans:
        pa, pb = (_load_plan(p) for p in args.plans)
        D = pa.to_dense() - pb.to_dense()
    else:
        raise ConfigError("give --random N or --plans A B")
    parts, visits = conformal_realization(D, return_visits=True)
    recon = sum((p.to_dense() for p in parts), np.zeros_like(D))
    print(json.dumps({
        "support": int(np.count_nonzero(D)), "parts": len(parts),
        "cycle_lengths": [2 * p.t for p in parts],
        "max_visits": max(visits) if visits else 0,
        "reconstruction_error": float(np.abs(recon - D).max()),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbcdot", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p-exp", type=float, default=2.0)
    g.add_argument("--variant-data", dest="data_variant")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="compute the optimal value")
    _add_dataset_args(o)
    o.add_argument("--method", choices=("solve_full", "closed_form_1d"), default="solve_full")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("solve", help="single solver run")
    _add_dataset_args(s)
    s.add_argument("--variant", choices=VARIANTS, default="arbcd")
    s.add_argument("--m", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--l", type=int)
    s.add_argument("--s", type=float, default=0.1)
    s.add_argument("--T", type=int, default=10)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--run-seed", type=int, default=0)
    s.add_argument("--init", choices=("auto", "product", "northwest"), default="auto")
    s.add_argument("--inexact-eps", type=float)
    s.add_argument("--inexact-kind", choices=("constant", "power"), default="constant")
    s.add_argument("--round-each-iter", action="store_true")
    s.add_argument("--reference", choices=("solve_full", "closed_form_1d"))
    s.add_argument("--target-gap", type=float)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run an experiment from a JSON config")
    b.add_argument("config")
    b.add_argument("--output-dir")
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_bench)

    nl = sub.add_parser("nullspace", help="conformal realization of a null direction")
    nl.add_argument("--random", type=int, metavar="N")
    nl.add_argument("--seed", type=int, default=0)
    nl.add_argument("--plans", nargs=2, metavar=("A", "B"))
    nl.set_defaults(func=cmd_nullspace)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, SelectionError, ValueError, KeyError, TypeError, NullSpaceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SubsolverError, RunAborted, OracleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

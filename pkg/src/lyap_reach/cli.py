"""``lyap-reach`` command line: simulate, gen-data, train, eval, ablate, export-plots.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical abort.
Configs are JSON files with optional sections ``sampler``, ``rollout``, ``train``,
``weights``, ``schedule`` and ``injector``; command-line flags override them.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .datagen import SamplerConfig, config_hash, generate_dataset, read_jsonl, write_dataset
from .experiments import AblationSpec, BatchSpec, run_ablation, run_batch, summarize
from .kinematics import load_chain, ur5_chain, ur5_chain_path
from .learning.losses import LossWeights
from .learning.model import LearnedController, load_checkpoint, save_checkpoint
from .learning.train import (
    PerturbationSchedule,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    init_regressor,
    make_batch,
    train,
    train_config_dict,
    write_log_csv,
)
from .simulator import ExactController, FalsePositiveInjector, RolloutConfig, load_scene, rollout, read_trajectory_csv, write_trajectory_csv

log = logging.getLogger("lyap_reach")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


# -- config and manifest helpers -------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}", EXIT_USAGE)
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}", EXIT_DATA)


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def build(cls, section: dict | None, **overrides):
    kw = _tuplify(section or {})
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        if cls is SamplerConfig:
            return SamplerConfig.from_dict(kw)
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad {cls.__name__} configuration: {exc}", EXIT_USAGE)


def get_chain(path):
    if path is None:
        return ur5_chain(), ur5_chain_path()
    try:
        return load_chain(path), Path(path)
    except FileNotFoundError:
        raise CliError(f"chain file not found: {path}", EXIT_USAGE)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid chain file {path}: {exc}", EXIT_DATA)


def _timestamp(offset: float = 0.0) -> str:
    # SOURCE_DATE_EPOCH pins timestamps so reruns are byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time() + offset
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def content_hash(paths, config: dict) -> str:
    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(f.name.encode())
            h.update(f.read_bytes())
    h.update(json.dumps(config, sort_keys=True, default=str).encode())
    return h.hexdigest()


def dump_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def write_manifest(out_dir: Path, subcommand: str, config: dict, seed, inputs, outputs, started: str) -> None:
    dump_json({
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "input_hash": content_hash([p for p in inputs if p is not None], config),
        "started": started,
        "finished": _timestamp(),
        "outputs": sorted(str(Path(o).relative_to(out_dir)) if Path(o).is_relative_to(out_dir) else str(o)
                          for o in outputs),
    }, out_dir / "manifest.json")


def read_dataset(data_dir) -> tuple[list, list]:
    d = Path(data_dir)
    if not (d / "train.jsonl").exists():
        raise CliError(f"no train.jsonl in {d}", EXIT_USAGE)
    try:
        train = read_jsonl(d / "train.jsonl")
        evals = read_jsonl(d / "eval.jsonl") if (d / "eval.jsonl").exists() else []
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"corrupt dataset in {d}: {exc}", EXIT_DATA)
    if not train:
        raise CliError(f"empty training set in {d}", EXIT_DATA)
    return train, evals


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = _timestamp()
    cfg = load_config(args.config)
    chain, chain_path = get_chain(args.chain)
    rc = build(RolloutConfig, cfg.get("rollout"), eta=args.eta, max_steps=args.max_steps)
    sampler = build(SamplerConfig, cfg.get("sampler"))
    injector = None
    if args.phantom_prob or cfg.get("injector"):
        injector = build(FalsePositiveInjector, cfg.get("injector"), spawn_probability=args.phantom_prob,
                         lifetime=args.phantom_lifetime, clf_bias=args.phantom_bias)
    inputs = [chain_path, args.config, args.scene]
    if args.controller == "exact":
        controller, label = ExactController(chain), "exact"
    elif args.controller.startswith("ckpt:"):
        ckpt = args.controller[5:]
        if not Path(ckpt).exists():
            raise CliError(f"checkpoint not found: {ckpt}", EXIT_USAGE)
        controller, label = LearnedController(load_checkpoint(ckpt)), "learned"
        inputs.append(ckpt)
    else:
        raise CliError("--controller must be 'exact' or 'ckpt:<path>'", EXIT_USAGE)

    out = Path(args.out)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if args.scene:
        try:
            scene = load_scene(args.scene)
        except FileNotFoundError:
            raise CliError(f"scene file not found: {args.scene}", EXIT_USAGE)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise CliError(f"invalid scene file {args.scene}: {exc}", EXIT_DATA)
        summary = _simulate_scene_file(chain, scene, controller, rc, sampler, injector, args, traj_dir, outputs)
    else:
        spec = BatchSpec(tuple(args.instances), args.scenes, args.trajectories_per_scene, args.seed)
        records = run_batch(chain, controller, spec, rc, sampler, injector)
        for r in records:
            p = traj_dir / f"n{r.n_instances}_s{r.scene:04d}_t{r.trial:02d}.csv"
            write_trajectory_csv(r.trajectory, p)
            outputs.append(p)
        summary = summarize(records, spec, label)
    summary["rollout_config"] = asdict(rc)
    dump_json(summary, out / "summary.json")
    outputs.append(out / "summary.json")
    config = {"rollout": asdict(rc), "sampler": asdict(sampler), "controller": args.controller,
              "injector": asdict(injector) if injector else None,
              "instances": list(args.instances), "scenes": args.scenes,
              "trajectories_per_scene": args.trajectories_per_scene}
    write_manifest(out, "simulate", config, args.seed, inputs, outputs, started)
    rate = summary.get("success_rate")
    print(f"success_rate: {rate if rate is not None else 'n/a'} over {summary['all']['trajectories']} trajectories")
    return EXIT_OK


def _simulate_scene_file(chain, scene, controller, rc, sampler, injector, args, traj_dir, outputs) -> dict:
    from .datagen import sample_start_pose
    from .rng import substream
    from .simulator import inject_false_positives

    trajs = []
    for k in range(args.trajectories_per_scene):
        _, q0 = sample_start_pose(chain, sampler, substream(args.seed, "starts", 0, 0, k))
        ph = None
        if injector is not None:
            ph = inject_false_positives(scene, injector, substream(args.seed, "phantoms", 0, 0, k), rc.max_steps)
        tr = rollout(chain, scene, controller, rc, q0, ph)
        p = traj_dir / f"scene_t{k:02d}.csv"
        write_trajectory_csv(tr, p)
        outputs.append(p)
        trajs.append(tr)
    n = len(trajs)
    succ = sum(t.outcome.success for t in trajs)
    row = {"trajectories": n, "successes": succ, "success_rate": succ / n if n else None,
           "mean_switches": float(np.mean([t.switch_count for t in trajs])) if n else None}
    return {"controller": args.controller, "buckets": {str(len(scene.targets)): row}, "all": row,
            "success_rate": row["success_rate"]}


def cmd_gen_data(args) -> int:
    started = _timestamp()
    cfg = load_config(args.config)
    chain, chain_path = get_chain(args.chain)
    sampler = build(SamplerConfig, cfg.get("sampler"), n_scenes=args.scenes)
    train, evals = generate_dataset(chain, sampler, args.seed)
    out = Path(args.out)
    counts = write_dataset(out, train, evals, sampler, args.seed)
    write_manifest(out, "gen-data", {"sampler": sampler.to_dict(), "counts": counts}, args.seed,
                   [chain_path, args.config], [out / "train.jsonl", out / "eval.jsonl"], started)
    print(f"wrote {counts['train_samples']} train / {counts['eval_samples']} eval samples "
          f"({counts['train_scenes']} / {counts['eval_scenes']} scenes)")
    return EXIT_OK


def _train_settings(cfg: dict, args):
    tc = build(TrainConfig, cfg.get("train"), epochs=args.epochs, seed=args.seed)
    weights = build(LossWeights, cfg.get("weights"))
    schedule = build(PerturbationSchedule, cfg.get("schedule"))
    return tc, weights, schedule


def cmd_train(args) -> int:
    started = _timestamp()
    cfg = load_config(args.config)
    chain, chain_path = get_chain(args.chain)
    tc, weights, schedule = _train_settings(cfg, args)
    use_diff = args.diff == "on"
    train_s, eval_s = read_dataset(args.data)
    tr = make_batch(chain, train_s)
    ev = make_batch(chain, eval_s) if eval_s else None
    reg = init_regressor(tr, tc, tc.seed)
    try:
        res = train(reg, tr, ev, tc, weights, schedule, use_diff=use_diff, seed=tc.seed)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ckpt = Path(args.out)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    tconf = train_config_dict(tc, weights, schedule, use_diff)
    save_checkpoint(res.regressor, ckpt, {"train_config_hash": config_hash(tconf)})
    log_path = ckpt.with_suffix(".log.csv")
    write_log_csv(res.log, log_path)
    write_manifest(ckpt.parent, "train", tconf, tc.seed, [chain_path, args.config, args.data],
                   [ckpt, log_path], started)
    if res.final:
        print(format_metric_row("w" if use_diff else "w/o", res.final))
    return EXIT_OK


METRIC_HEADER = f"{'':8s} {'MAE V':>8s} {'MAE u':>8s} {'MRE V':>8s} {'MRE u':>8s} {'Diff':>8s}"


def format_metric_row(name: str, m: dict, extra: str = "") -> str:
    return (f"{name:8s} {m['mae_V']:8.4f} {m['mae_u']:8.4f} {m['mre_V']:8.3f} {m['mre_u']:8.3f} "
            f"{m['diff_err']:8.4f}{extra}")


def cmd_eval(args) -> int:
    chain, _ = get_chain(args.chain)
    if not Path(args.ckpt).exists():
        raise CliError(f"checkpoint not found: {args.ckpt}", EXIT_USAGE)
    try:
        reg = load_checkpoint(args.ckpt)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid checkpoint {args.ckpt}: {exc}", EXIT_DATA)
    _, eval_s = read_dataset(args.data)
    if not eval_s:
        raise CliError(f"no eval samples in {args.data}", EXIT_DATA)
    sched = PerturbationSchedule()
    m = evaluate(reg, make_batch(chain, eval_s), sched.floor, LossWeights())
    print(METRIC_HEADER)
    print(format_metric_row("model", m))
    return EXIT_OK


def cmd_ablate(args) -> int:
    started = _timestamp()
    cfg = load_config(args.config)
    chain, chain_path = get_chain(args.chain)
    tc, weights, schedule = _train_settings(cfg, args)
    rc = build(RolloutConfig, cfg.get("rollout"))
    sampler = build(SamplerConfig, cfg.get("sampler"))
    train_s, eval_s = read_dataset(args.data)
    if not eval_s:
        raise CliError(f"no eval samples in {args.data}", EXIT_DATA)
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    grasp = BatchSpec(tuple(args.instances), args.grasp_scenes, args.grasp_trajectories, args.seed + 1000)
    spec = AblationSpec(seeds, tc, weights, schedule, grasp, rc)
    report = run_ablation(chain, make_batch(chain, train_s), make_batch(chain, eval_s), spec, sampler)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for r in report["runs"]:
        if "regressor" in r:
            name = f"seed{r['seed']}_{'diff' if r['diff'] else 'nodiff'}"
            save_checkpoint(r["regressor"], out / f"{name}.json")
            write_log_csv(r["log"], out / f"{name}.log.csv")
            outputs += [out / f"{name}.json", out / f"{name}.log.csv"]
    public = {"rows": report["rows"], "diverged": report["diverged"], "seeds": list(seeds)}
    dump_json(public, out / "report.json")
    text = format_report(report, len(seeds))
    (out / "report.txt").write_text(text + "\n")
    outputs += [out / "report.json", out / "report.txt"]
    write_manifest(out, "ablate", {"spec": asdict(spec)}, args.seed, [chain_path, args.config, args.data],
                   outputs, started)
    print(text)
    return EXIT_NUMERIC if len(report["diverged"]) == 2 * len(seeds) else EXIT_OK


def format_report(report: dict, n_seeds: int) -> str:
    lines = [METRIC_HEADER + f" {'GSS %':>8s}"]
    for name, label in (("with_diff", "w"), ("without_diff", "w/o")):
        row = report["rows"][name]
        for r in row["per_seed"]:
            lines.append(format_metric_row(f"{label}[{r['seed']}]", r, f" {100 * r['grasp_success']:8.1f}"))
    if n_seeds > 1:
        for name, label in (("with_diff", "w"), ("without_diff", "w/o")):
            med = report["rows"][name].get("median")
            if med:
                lines.append(format_metric_row(f"{label} med", med, f" {100 * med['grasp_success']:8.1f}"))
    for d in report["diverged"]:
        lines.append(f"seed {d['seed']} diff={'on' if d['diff'] else 'off'}: diverged at epoch {d['epoch']}")
    return "\n".join(lines)


def cmd_export_plots(args) -> int:
    started = _timestamp()
    src = Path(args.traj_dir)
    if not src.is_dir():
        raise CliError(f"trajectory directory not found: {src}", EXIT_USAGE)
    files = sorted(src.glob("*.csv"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not files:
        log.warning("no trajectory CSVs in %s", src)
    index, outputs = [], []
    for f in files:
        try:
            tr = read_trajectory_csv(f)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_DATA)
        t, V = tr["t"], tr["V"]
        ubar = np.column_stack([tr[f"ubar{i}"] for i in range(1, 7)]) if len(t) else np.zeros((0, 6))
        unorm = np.linalg.norm(ubar, axis=1)
        v_path = out / f"{f.stem}_V.csv"
        u_path = out / f"{f.stem}_unorm.csv"
        _write_series(v_path, "t,V", t, V)
        _write_series(u_path, "t,unorm", t, unorm)
        outputs += [v_path, u_path]
        index.append({"trajectory": f.name, "V_series": v_path.name, "unorm_series": u_path.name,
                      "V_nonincreasing": bool(np.all(np.diff(V) <= 0))})
    script = out / "plot.gp"
    script.write_text(_gnuplot(index))
    dump_json(index, out / "index.json")
    outputs += [script, out / "index.json"]
    write_manifest(out, "export-plots", {"traj_dir": str(src)}, None, [src], outputs, started)
    print(f"exported {len(index)} trajectories")
    return EXIT_OK


def _write_series(path, header, t, y) -> None:
    with open(path, "w") as f:
        f.write(header + "\n")
        for a, b in zip(t, y):
            f.write(f"{float(a)!r},{float(b)!r}\n")


def _gnuplot(index) -> str:
    lines = ["set datafile separator ','", "set key off", "set terminal pngcairo size 900,600",
             "set output 'V.png'", "set xlabel 't [s]'", "set ylabel 'V'", "set logscale y"]
    if index:
        lines.append("plot " + ", \\\n     ".join(f"'{e['V_series']}' every ::1 with lines" for e in index))
        lines += ["set output 'unorm.png'", "unset logscale y", "set ylabel '|u|'"]
        lines.append("plot " + ", \\\n     ".join(f"'{e['unorm_series']}' every ::1 with lines" for e in index))
    return "\n".join(lines) + "\n"


# -- entry point -----------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyap-reach", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="closed-loop reaching rollouts")
    s.add_argument("--chain")
    s.add_argument("--config")
    s.add_argument("--scene", help="scene JSON; default: random scenes per instance count")
    s.add_argument("--controller", default="exact", help="'exact' or 'ckpt:<path>'")
    s.add_argument("--instances", type=int, nargs="+", default=[1, 2, 3, 4], choices=[1, 2, 3, 4])
    s.add_argument("--scenes", type=int, default=10)
    s.add_argument("--trajectories-per-scene", type=int, default=10)
    s.add_argument("--eta", type=float)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--phantom-prob", type=float)
    s.add_argument("--phantom-lifetime", type=int)
    s.add_argument("--phantom-bias", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="sim_out")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-data", help="generate a labelled dataset")
    g.add_argument("--chain")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scenes", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a regressor")
    t.add_argument("--chain")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--diff", choices=["on", "off"], default="on")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the eval split")
    e.add_argument("--chain")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="paired with/without differential-constraint ablation")
    a.add_argument("--chain")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--epochs", type=int)
    a.add_argument("--instances", type=int, nargs="+", default=[1, 2, 3, 4], choices=[1, 2, 3, 4])
    a.add_argument("--grasp-scenes", type=int, default=5)
    a.add_argument("--grasp-trajectories", type=int, default=5)
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export-plots", help="V(t) and |u|(t) series plus a gnuplot script")
    x.add_argument("--traj-dir", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("scenes", "trajectories_per_scene", "seeds", "grasp_scenes", "grasp_trajectories"):
        if getattr(args, name, 0) is not None and getattr(args, name, 0) < 0:
            print(f"error: --{name.replace('_', '-')} must be nonnegative", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

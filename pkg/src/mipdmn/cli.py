"""Command line front end: ``dmn <command> [options]``.

Every command reads an optional JSON configuration (``--config``); explicit
flags override its entries. Outputs go to ``--out`` together with a
``manifest.json`` describing the run. Errors exit with code 2 (ConfigError),
3 (DataError) or 4 (NumericalError) and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import io
from .errors import ConfigError, DmnError
from .identify import PhaseGuess, identify
from .inelastic import DriverConfig, LoadPath, MaterialLaw, cyclic_path, run_path
from .network import active_nodes, dmn_orientation_tensors, forward_conductivity, forward_cte, forward_stiffness
from .oracle import TeacherSpec, gen_dataset, gen_teacher
from .parametric import ARCHS, count_params, eval_params
from .sampling import MaterialRanges, sample_materials
from .tensors import iso_cte
from .training import ConstraintTargets, TrainConfig, evaluate, rprop_fit

EXIT_CODES = {"ConfigError": 2, "DataError": 3, "NumericalError": 4}


def _load_config(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


def _merge(cfg: dict, **flags):
    """Flags that were given (not ``None``) override config entries."""
    out = dict(cfg)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _require(path, what):
    if path is None:
        raise ConfigError(f"{what} is required")
    if not Path(path).exists():
        raise ConfigError(f"{what} {path} does not exist")
    return path


def _points(values, q: int):
    """Parameter points from a list of numbers (vf only) or of lists."""
    P = np.array(values, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[1] != q + 1:
        raise ConfigError(f"parameter points need {q + 1} entries")
    return P


def _phase_stiffness(spec):
    """Stiffness from ``{"kind": ..., "constants": [...]}`` or a full 6x6 matrix."""
    if spec is None:
        raise ConfigError("phase properties are required")
    if isinstance(spec, dict) and "stiffness" in spec:
        return np.array(spec["stiffness"], dtype=float)
    return PhaseGuess(spec["kind"], spec["constants"]).stiffness()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_gen_data(args, cfg):
    cfg = _merge(cfg, seed=args.seed, n_materials=args.n_materials, vf=args.vf, test_vf=args.test_vf,
                 teacher_depth=args.teacher_depth, format=args.format)
    seed = int(cfg.get("seed", 0))
    tcfg = dict(cfg.get("teacher", {}))
    tcfg.setdefault("seed", seed)
    if "teacher_depth" in cfg:
        tcfg["L"] = int(cfg["teacher_depth"])
    if "w_range" in tcfg:
        tcfg["w_range"] = tuple(tcfg["w_range"])
    spec = TeacherSpec(**tcfg)
    teacher = gen_teacher(spec)
    P = _points(cfg.get("vf", [0.2, 0.4, 0.6]), spec.q)
    test_P = _points(cfg["test_vf"], spec.q) if cfg.get("test_vf") else None
    n = int(cfg.get("n_materials", 500))
    ranges = MaterialRanges.from_dict(cfg["ranges"]) if "ranges" in cfg else MaterialRanges()
    C1, C2 = sample_materials(n, ranges, seed=seed)
    ds = gen_dataset(teacher, P, C1, C2, float(cfg.get("train_fraction", 0.8)), seed=seed, test_P=test_P,
                     noise=float(cfg.get("noise", spec.noise)))
    out = Path(args.out)
    data_path = out / f"dataset.{cfg.get('format', 'csv')}"
    io.save_dataset(ds, data_path)
    io.save_model(teacher, out / "teacher.json")
    print(f"wrote {len(ds)} records ({len(P)} parameter points x {n} material pairs) to {data_path}")
    return cfg, [seed], [], [data_path, out / "teacher.json"]


def _targets(cfg, q):
    if "targets_from" in cfg:
        ref = io.load_model(_require(cfg["targets_from"], "target model"))
        p = np.array(cfg.get("targets_p", [0.5] + [0.5] * q), dtype=float)
        a = dmn_orientation_tensors(ref.instance(p))
        return ConstraintTargets(a[0], a[1])
    t = cfg.get("targets")
    if t is None:
        return None
    if isinstance(t, str):
        return ConstraintTargets.both(t)
    return ConstraintTargets(t.get("phase1"), t.get("phase2"))


def cmd_train(args, cfg):
    cfg = _merge(cfg, seed=args.seed, epochs=args.epochs, restarts=args.restarts, lambda_vf=args.lambda_vf,
                 lambda_a=args.lambda_a, precision=args.precision, depth=args.depth, arch=args.arch,
                 targets=args.targets, targets_from=args.targets_from, data=args.data)
    ds = io.load_dataset(_require(cfg.get("data"), "--data"))
    train = ds.where("train")
    if len(train) == 0:
        raise ConfigError("dataset has no training records")
    tc = TrainConfig.from_dict(cfg)
    L = int(cfg.get("depth", 5))
    arch = cfg.get("arch", "mi")
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}")
    targets = _targets(cfg, ds.q)
    off, scale = None, None
    if ds.q:
        lo, hi = train.p[:, 1:].min(0), train.p[:, 1:].max(0)
        off = np.concatenate([[0.0], lo])
        scale = np.concatenate([[1.0], np.where(hi > lo, hi - lo, 1.0)])
    res = rprop_fit(None, train, targets, tc, L=L, q=ds.q, arch=arch, p_offset=off, p_scale=scale,
                    log=lambda m: print(m, file=sys.stderr) if args.verbose else None)
    out = Path(args.out)
    io.save_model(res.net, out / "model.json")
    io.write_csv(out / "history.csv", res.history_columns, res.history)
    print(f"best restart {res.best_restart} of {tc.restarts}: final loss {res.loss:.6e} ({res.seconds:.1f} s)")
    return cfg, [tc.seed], [cfg["data"]], [out / "model.json", out / "history.csv"]


def cmd_eval(args, cfg):
    cfg = _merge(cfg, model=args.model, data=args.data)
    net = io.load_model(_require(cfg.get("model"), "--model"))
    ds = io.load_dataset(_require(cfg.get("data"), "--data"))
    e, rows = evaluate(net, ds)
    out = Path(args.out)
    pn = io.p_names(ds.q)
    io.write_csv(out / "quantiles.csv", ["split", *pn, "n", "q10", "q50", "q90"],
                 ([r["split"], *r["p"], r["n"], r["q10"], r["q50"], r["q90"]] for r in rows))
    io.write_csv(out / "errors.csv", [*pn, "split", "m_index", "error"],
                 ([*ds.p[i], ds.split[i], ds.m_index[i], e[i]] for i in range(len(ds))))
    print(f"{'split':6s} {'p':>16s} {'n':>5s} {'q10':>9s} {'q50':>9s} {'q90':>9s}")
    for r in rows:
        p = ",".join(f"{x:.4g}" for x in r["p"])
        print(f"{r['split']:6s} {p:>16s} {r['n']:5d} {r['q10']:9.4%} {r['q50']:9.4%} {r['q90']:9.4%}")
    return cfg, [], [cfg["model"], cfg["data"]], [out / "quantiles.csv", out / "errors.csv"]


def _grid(cfg, q):
    if "p" in cfg:
        return _points(cfg["p"], q)
    vf = np.array(cfg.get("vf", np.linspace(0, 1, 11)), dtype=float)
    qv = np.array(cfg.get("q", [0.0] * q), dtype=float).reshape(-1)
    return np.column_stack([vf, np.tile(qv, (len(vf), 1))])


def cmd_predict(args, cfg):
    cfg = _merge(cfg, model=args.model, vf=args.vf)
    net = io.load_model(_require(cfg.get("model"), "--model"))
    P = _grid(cfg, net.q)
    C1, C2 = _phase_stiffness(cfg.get("phase1")), _phase_stiffness(cfg.get("phase2"))
    k = [np.array(cfg[f"k{j}"], dtype=float) for j in (1, 2)] if "k1" in cfg else None
    if k is not None:
        k = [x * np.eye(3) if x.ndim == 0 else x for x in k]
    a = [np.array(cfg[f"alpha{j}"], dtype=float) for j in (1, 2)] if "alpha1" in cfg else None
    if a is not None:
        a = [iso_cte(x) if x.ndim == 0 else x for x in a]
    header = io.p_names(net.q) + io.triu_names("Cbar")
    if k is not None:
        header += [f"kbar_{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(3))]
    if a is not None:
        header += [f"alphabar_{m}" for m in io.MANDEL_LABELS]
    rows = []
    for p in P:
        m = net.instance(p)
        row = [*p, *io.triu_entries(forward_stiffness(m, C1, C2))]
        if k is not None:
            row += list(forward_conductivity(m, k[0], k[1])[np.triu_indices(3)])
        if a is not None:
            row += list(forward_cte(m, C1, C2, a[0], a[1])[1])
        rows.append(row)
    out = Path(args.out)
    io.write_csv(out / "predictions.csv", header, rows)
    print(f"wrote {len(rows)} predictions to {out / 'predictions.csv'}")
    return cfg, [], [cfg["model"]], [out / "predictions.csv"]


def _law(spec):
    spec = dict(spec or {})
    kind = spec.pop("kind", "elastic")
    if "stiffness" in spec:
        return MaterialLaw.elastic(C=spec["stiffness"])
    return MaterialLaw(kind, **spec)


def cmd_simulate(args, cfg):
    cfg = _merge(cfg, model=args.model, path=args.path, rtol=args.rtol, steps=args.steps)
    if args.no_aitken:
        cfg["aitken"] = False
    net = io.load_model(_require(cfg.get("model"), "--model"))
    p = np.array(cfg.get("p", [0.5] + [0.0] * net.q), dtype=float)
    laws = (_law(cfg.get("phase1")), _law(cfg.get("phase2")))
    if cfg.get("path"):
        t, eps = io.load_load_path(_require(cfg["path"], "load path"))
        path = LoadPath(t, eps)
    else:
        amp = cfg.get("amplitude")
        kw = {"amplitude": np.array(amp, dtype=float)} if amp is not None else {}
        path = cyclic_path(steps_per_segment=int(cfg.get("steps", 20)), cycles=int(cfg.get("cycles", 1)), **kw)
    dc = DriverConfig(rtol=float(cfg.get("rtol", 1e-1)), aitken=bool(cfg.get("aitken", True)),
                      max_iter=int(cfg.get("max_iter", 200)))
    r = run_path(net.instance(p), laws, path, dc)
    out = Path(args.out)
    omega = [om[-1] if om else 1.0 for om in r.omegas]
    header = ["t"] + [f"eps_{m}" for m in io.MANDEL_LABELS] + [f"sig_{m}" for m in io.MANDEL_LABELS] + [
        "iterations", "omega", "peq_mean", "power", "node_power"]
    rows = np.column_stack([r.t, r.eps, r.sig, r.iterations, omega, r.peq_mean, r.power, r.node_power])
    io.write_csv(out / "results.csv", header, rows)
    print(f"{len(r.t) - 1} increments, {r.total_iterations} fixed-point iterations, "
          f"power gap {r.power_gap():.3%}")
    return cfg, [], [cfg["model"]], [out / "results.csv"]


def cmd_identify(args, cfg):
    cfg = _merge(cfg, model=args.model, iterations=args.iterations)
    net = io.load_model(_require(cfg.get("model"), "--model"))
    if "Cbar" not in cfg:
        raise ConfigError("config entry Cbar (6x6 or 21 upper-triangle entries) is required")
    Cd = np.array(cfg["Cbar"], dtype=float)
    Cd = io.from_triu(Cd) if Cd.shape == (21,) else Cd.reshape(6, 6)
    g1 = PhaseGuess(cfg["phase1"]["kind"], cfg["phase1"]["constants"])
    g2 = PhaseGuess(cfg["phase2"]["kind"], cfg["phase2"]["constants"])
    r = identify(net, Cd, g1, g2, float(cfg.get("vf", 0.5)), q=cfg.get("q", []),
                 iterations=int(cfg.get("iterations", 1000)), lr=float(cfg.get("lr", 1e-2)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"phase1": {"kind": r.phase1.kind, "constants": r.phase1.constants.tolist()},
           "phase2": {"kind": r.phase2.kind, "constants": r.phase2.constants.tolist()},
           "vf": r.vf, "loss": r.loss, "relative_error": r.relative_error}
    (out / "identified.json").write_text(json.dumps(doc, indent=1) + "\n")
    io.write_csv(out / "history.csv", ["iteration", "loss", "vf"], r.history)
    print(f"identified vf {r.vf:.6f}, relative Cbar error {r.relative_error:.4%}")
    return cfg, [], [cfg["model"]], [out / "identified.json", out / "history.csv"]


def cmd_info(args, cfg):
    net = io.load_model(_require(args.model, "model"))
    counts = count_params(net.L, net.q, net.arch)
    print(f"depth L            {net.L}")
    print(f"architecture       {net.arch} ({net.activation})")
    print(f"morphological q    {net.q}")
    print(f"material nodes     {2 ** net.L}")
    print(f"parameters         {counts['total']} (weights {counts['weights']}, rotations {counts['rotations']})")
    print("active node ratios (phase 1, phase 2):")
    for vf in np.linspace(0, 1, 11):
        w, _ = eval_params(net, np.concatenate([[vf], net.p_offset[1:]]))
        r = active_nodes(w).ratios
        print(f"  vf={vf:4.2f}  {float(r[0]):.3f}  {float(r[1]):.3f}")
    return {}, [], [args.model], []


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _floats(s):
    return [float(x) for x in s.split(",")] if s else None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--precision", choices=["f32", "f64"])
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dmn", description="Parametric laminate network homogenization")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="teacher-labelled dataset")
    g.add_argument("--n-materials", type=int)
    g.add_argument("--vf", type=_floats, help="comma-separated volume fractions")
    g.add_argument("--test-vf", type=_floats)
    g.add_argument("--teacher-depth", type=int)
    g.add_argument("--format", choices=["csv", "json"])
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="fit a parametric network")
    t.add_argument("--data")
    t.add_argument("--depth", type=int)
    t.add_argument("--arch", choices=ARCHS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--restarts", type=int)
    t.add_argument("--lambda-vf", type=float)
    t.add_argument("--lambda-a", type=float)
    t.add_argument("--targets", choices=["unidirectional", "planar_isotropic"])
    t.add_argument("--targets-from", help="model whose orientation tensors are the targets")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="error quantiles per parameter point and split")
    e.add_argument("--model")
    e.add_argument("--data")
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="effective properties over a parameter grid")
    p.add_argument("--model")
    p.add_argument("--vf", type=_floats)
    p.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", parents=[common], help="nonlinear response along a load path")
    s.add_argument("--model")
    s.add_argument("--path", help="CSV with t and six Mandel strains")
    s.add_argument("--rtol", type=float)
    s.add_argument("--steps", type=int, help="increments per segment of the default cyclic path")
    s.add_argument("--no-aitken", action="store_true")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("identify", parents=[common], help="phase constants and vf from an effective stiffness")
    i.add_argument("--model")
    i.add_argument("--iterations", type=int)
    i.set_defaults(func=cmd_identify)

    n = sub.add_parser("info", parents=[common], help="summary of a model file")
    n.add_argument("model")
    n.set_defaults(func=cmd_info)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads:
            torch.set_num_threads(args.threads)
        cfg = _load_config(args.config)
        t0 = time.perf_counter()
        used, seeds, inputs, outputs = args.func(args, cfg)
        if outputs:
            io.write_manifest(args.out, args.command, used, seeds, inputs, outputs, time.perf_counter() - t0)
    except DmnError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    return 0


if __name__ == "__main__":
    sys.exit(main())

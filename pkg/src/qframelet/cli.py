"""Command-line entry point, installed as ``qframelet``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from . import experiment as E
from .chebyshev import fast_decompose, fast_reconstruct, make_plan
from .errors import QFrameletError
from .exact import build_transform_blocks, decompose_exact, eigendecompose, make_spec, reconstruct_exact
from .graph import build_graph, metapath_adjacency, normalized_laplacian, read_edge_list, write_edge_list
from .io import load_coefficients, load_model_into, save_coefficients
from .modulation import make_family
from .nn import predict

log = logging.getLogger("qframelet")


def _config(args) -> dict:
    cfg = E.load_config(args.config, args.set)
    if args.seed is not None:
        cfg["experiment"]["seed"] = args.seed
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _graph(args, cfg):
    """Graph from ``--graph``/``--num-nodes`` or else the configured dataset."""
    if args.graph:
        pairs = read_edge_list(args.graph)
        n = args.num_nodes or (1 + max((max(p) for p in pairs), default=0))
        return build_graph(n, pairs), None
    ds = E.build_dataset(cfg)
    if ds.is_hetero:
        raise QFrameletError("this command needs a homogeneous graph; pass --graph")
    return ds.graph, ds


def _signal(args, ds, n: int) -> np.ndarray:
    if args.signal:
        X = np.loadtxt(args.signal, delimiter=",", ndmin=2)
    elif ds is not None:
        X = ds.features
    else:
        raise QFrameletError("pass --signal or configure a dataset")
    if X.shape[0] != n:
        raise QFrameletError(f"signal has {X.shape[0]} rows, graph has {n} nodes")
    return X


def _plan(lap, cfg):
    fr = cfg["framelet"]
    fam = make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"])
    return make_plan(lap, fam, int(fr["levels"]), float(fr["dilation"]), int(cfg["chebyshev"]["degree"]),
                     fr["cutoff"])


def cmd_laplacian(args, cfg) -> int:
    g, _ = _graph(args, cfg)
    lap = normalized_laplacian(g)
    spec = make_spec(make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"]),
                     int(cfg["framelet"]["levels"]), lap.lambda_max, float(cfg["framelet"]["dilation"]))
    info = {
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "lambda_max": lap.lambda_max,
        "coarsest_scale": spec.coarsest_scale,
        "num_blocks": spec.num_blocks,
    }
    if args.out is not None:
        import scipy.sparse as sp

        sp.save_npz(_out_dir(cfg) / "laplacian.npz", lap.matrix.tocsr())
    print(json.dumps(info, indent=2))
    return 0


def cmd_decompose(args, cfg) -> int:
    g, ds = _graph(args, cfg)
    lap = normalized_laplacian(g)
    X = _signal(args, ds, g.num_nodes)
    if args.exact:
        fam = make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"])
        spec = make_spec(fam, int(cfg["framelet"]["levels"]), lap.lambda_max, float(cfg["framelet"]["dilation"]))
        C = decompose_exact(build_transform_blocks(eigendecompose(lap), spec), X)
    else:
        C = fast_decompose(_plan(lap, cfg), X)
    path = _out_dir(cfg) / "coefficients.qfc"
    save_coefficients(path, C)
    print(f"wrote {C.data.shape[0]} blocks of shape {C.data.shape[1:]} to {path}")
    return 0


def cmd_reconstruct(args, cfg) -> int:
    g, _ = _graph(args, cfg)
    lap = normalized_laplacian(g)
    C = load_coefficients(args.coefficients)
    if args.exact:
        fam = make_family(cfg["modulation"]["family"], cfg["modulation"]["alpha"])
        spec = make_spec(fam, C.levels, lap.lambda_max, float(cfg["framelet"]["dilation"]))
        X = reconstruct_exact(build_transform_blocks(eigendecompose(lap), spec), C)
    else:
        cfg["framelet"]["levels"] = C.levels
        X = fast_reconstruct(_plan(lap, cfg), C)
    path = _out_dir(cfg) / "reconstructed.csv"
    np.savetxt(path, X, delimiter=",", fmt="%.17g")
    print(f"wrote {X.shape[0]}x{X.shape[1]} signal to {path}")
    return 0


def cmd_train(args, cfg) -> int:
    res = E.run_experiment(cfg, _out_dir(cfg))
    for m in E.METRICS:
        mean, std = res.summary[m]
        print(f"{m}: {mean:.4f} +- {std:.4f}")
    print(f"results in {res.out_dir}")
    return 0


def cmd_denoise(args, cfg) -> int:
    row = E.run_denoise(cfg, _out_dir(cfg))
    print(json.dumps(row, indent=2))
    return 0


def cmd_eval(args, cfg) -> int:
    ds = E.build_dataset(cfg)
    plans = E.build_plans(ds, cfg)
    model = E.build_model(ds, plans, cfg, int(cfg["experiment"]["seed"]))
    load_model_into(args.checkpoint, model)
    X = E.NoiseInjector(cfg, ds)(ds.features, int(cfg["experiment"]["seed"]))
    pred = np.argmax(predict(model, plans, X), axis=1)
    m = D.compute_metrics(pred, ds.labels, ds.test_idx)
    path = _out_dir(cfg) / "eval.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["accuracy", "macro_f1", "micro_f1"])
        w.writerow([repr(m.accuracy), repr(m.macro_f1), repr(m.micro_f1)])
    print(f"accuracy {m.accuracy:.4f} macro_f1 {m.macro_f1:.4f} micro_f1 {m.micro_f1:.4f}")
    return 0


def cmd_metapath(args, cfg) -> int:
    if args.schema:
        from .graph import load_hetero_schema

        hg = load_hetero_schema(args.schema)
        paths = args.path or []
    else:
        ds = E.build_dataset(cfg)
        if not ds.is_hetero:
            raise QFrameletError("the configured dataset is not heterogeneous; pass --schema")
        hg = ds.hetero
        paths = args.path or list(ds.metapaths)
    if not paths:
        raise QFrameletError("pass at least one --path such as A-P-A")
    out = _out_dir(cfg)
    for p in paths:
        g = metapath_adjacency(hg, p)
        target = out / f"metapath_{str(p).replace('-', '')}.tsv"
        write_edge_list(target, g.edges)
        print(f"{p}: {g.num_nodes} nodes, {g.num_edges} edges -> {target}")
    return 0


def cmd_sweep(args, cfg) -> int:
    values = [float(v) for v in args.values.split(",")] if args.values else None
    out = _out_dir(cfg)
    if args.kind == "alpha":
        rows = E.alpha_sweep(cfg, values or [0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 0.95], out)
    else:
        rows = E.degree_sweep(cfg, [int(v) for v in (values or [3, 6, 12, 24])], out)
    for r in rows:
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return 0


COMMANDS = {
    "laplacian": (cmd_laplacian, "summarise the normalised Laplacian of a graph"),
    "decompose": (cmd_decompose, "write framelet coefficients of a signal (QFC1)"),
    "reconstruct": (cmd_reconstruct, "rebuild a signal from QFC1 coefficients"),
    "denoise": (cmd_denoise, "compare clean and noisy training runs"),
    "train": (cmd_train, "run the configured experiment"),
    "eval": (cmd_eval, "evaluate a saved checkpoint on the test split"),
    "metapath": (cmd_metapath, "write meta-path induced graphs"),
    "sweep": (cmd_sweep, "alpha or Chebyshev degree sweep"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--out", help="override output.dir")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qframelet", description="Quasi-framelet graph transforms and networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=text) for name, (_, text) in COMMANDS.items()}
    for name in ("laplacian", "decompose", "reconstruct"):
        parsers[name].add_argument("--graph", type=Path, help="edge list (overrides the configured dataset)")
        parsers[name].add_argument("--num-nodes", type=int, help="node count for --graph")
    for name in ("decompose", "reconstruct"):
        parsers[name].add_argument("--exact", action="store_true", help="use the eigendecomposition")
    parsers["decompose"].add_argument("--signal", type=Path, help="CSV signal, one row per node")
    parsers["reconstruct"].add_argument("coefficients", type=Path)
    parsers["eval"].add_argument("checkpoint", type=Path)
    parsers["metapath"].add_argument("--schema", type=Path)
    parsers["metapath"].add_argument("--path", action="append", help="meta-path such as A-P-A (repeatable)")
    parsers["sweep"].add_argument("kind", choices=("alpha", "degree"))
    parsers["sweep"].add_argument("--values", help="comma-separated values")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command][0](args, cfg)
    except (QFrameletError, OSError) as exc:
        print(f"qframelet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

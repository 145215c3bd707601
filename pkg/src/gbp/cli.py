"""``gbp`` command line: precompute, verify, bench, train, synth.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation (bad input, failed check).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import classifier, estimator, synthetic
from .errors import FormatError, GBPError, ValidationError
from .estimator import PropagationConfig, make_weights, propagate
from .features import load_features, normalize
from .graph import NodeSet, Graph, read_graph
from .reverse_push import push, push_count_bound

log = logging.getLogger("gbp")

EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 1, 2, 3

DEFAULTS = {
    "graph": None,
    "features": None,
    "targets": "all",
    "L": 4,
    "r": 0.5,
    "rmax": 1e-4,
    "nr": 0,
    "seed": 0,
    "alpha": 0.1,
    "last_hop": False,
    "weights": None,
    "out": None,
    "denormalize": False,
    "threads": 1,
}

# config-file spellings accepted besides the flag names
ALIASES = {
    "r_max": "rmax", "n_r": "nr", "level": "L", "levels": "L", "l": "L",
    "last-hop": "last_hop", "decay": "alpha",
}

BOOL_KEYS = {"last_hop", "denormalize"}
INT_KEYS = {"L", "nr", "seed", "threads"}
FLOAT_KEYS = {"r", "rmax", "alpha"}


class UsageError(GBPError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key in BOOL_KEYS:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"config key {key}: expected a boolean, got {value!r}")
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ValidationError(f"config key {key}: bad value {value!r}") from None
    return value


def load_config(path: str) -> dict:
    """``key = value`` lines; ``#`` comments; keys use flag names or their snake_case aliases."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in text.split("=", 1))
            key = ALIASES.get(key, key.replace("-", "_"))
            if key not in DEFAULTS:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            cfg[key] = _coerce(key, value)
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Merge settings with precedence flag > config file > default."""
    file_cfg = load_config(args.config) if getattr(args, "config", None) else {}
    env_threads = os.environ.get("GBP_THREADS")
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in file_cfg:
            out[key] = file_cfg[key]
        elif key == "threads" and env_threads:
            out[key] = _coerce("threads", env_threads)
        else:
            out[key] = default
    if out["threads"] < 1:
        raise ValidationError("threads must be >= 1")
    return out


def _weights_from(settings: dict):
    L = settings["L"]
    if settings["weights"] is not None:
        w = settings["weights"]
        values = [float(v) for v in w.split(",")] if isinstance(w, str) else list(w)
        return make_weights("custom", custom=values)
    if settings["last_hop"]:
        return make_weights("last_hop", L=L)
    return make_weights("ppr", settings["alpha"], L)


def build_config(settings: dict) -> PropagationConfig:
    return PropagationConfig(
        L=settings["L"], r=settings["r"], weights=_weights_from(settings),
        r_max=settings["rmax"], n_r=settings["nr"], seed=settings["seed"],
        denormalize=bool(settings["denormalize"]),
    )


def _require(settings: dict, *keys):
    missing = [k for k in keys if not settings.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k for k in missing))


def load_inputs(settings: dict):
    """Graph in ascending external-id order, features, internal target ids.

    Feature row i belongs to the node with the i-th smallest external id
    (row i = node i for contiguous 0..n-1 edge lists). Target files and
    embedding row ids use external ids.
    """
    g = read_graph(settings["graph"]).canonical()
    with open(settings["features"], encoding="utf-8") as fh:
        x = load_features(fh, g.node_count)
    targets = settings["targets"]
    if targets == "all":
        ids = NodeSet.all(g)
    else:
        with open(targets, encoding="utf-8") as fh:
            ids = NodeSet(to_internal(g, classifier.load_ids(fh)), g.node_count)
    return g, x, ids


def to_internal(g: Graph, external) -> np.ndarray:
    external = np.asarray(external, dtype=np.int64)
    pos = np.searchsorted(g.labels, external)
    found = pos < g.node_count
    found[found] = g.labels[pos[found]] == external[found]
    if not found.all():
        raise ValidationError(f"node ids not in graph: {external[~found][:5].tolist()}")
    return pos


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _embedding_bytes(emb) -> bytes:
    buf = io.BytesIO()
    estimator.write_embedding(emb, buf)
    return buf.getvalue()


def _manifest(settings, cfg, res, extra=None) -> dict:
    man = {
        "config": {k: v for k, v in settings.items()},
        "propagation": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "timings_ms": {k: round(v, 3) for k, v in res.timings_ms.items()},
        "push_count": res.push_state.push_count,
        "pushed_entries": res.push_state.pushed_entries,
        "walks": len(res.walks.targets) * res.walks.n_r,
        "walk_steps": res.walks.walk_steps,
        "targets": len(res.walks.targets),
        "features": int(res.seed.values.shape[1]),
        "denormalized": res.embedding.metadata.get("denormalized", False),
    }
    if extra:
        man.update(extra)
    return man


# -- subcommands --------------------------------------------------------------

def cmd_precompute(args) -> int:
    settings = resolve(args)
    _require(settings, "graph", "features", "out")
    cfg = build_config(settings)
    g, x, targets = load_inputs(settings)
    res = propagate(g, x, targets, cfg, threads=settings["threads"])
    res.embedding.row_ids = g.labels[res.embedding.row_ids]
    blob = _embedding_bytes(res.embedding)
    out = Path(settings["out"])
    out.write_bytes(blob)
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            estimator.write_embedding_tsv(res.embedding, fh)
    man = _manifest(settings, cfg, res, {"output": str(out), "output_sha256": _sha256(blob)})
    manifest_path = Path(str(out) + ".manifest.json")
    manifest_path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} ({res.embedding.shape[0]}x{res.embedding.shape[1]}) sha256={man['output_sha256']}")
    return 0


def cmd_verify(args) -> int:
    from . import verification as ver

    settings = resolve(args)
    _require(settings, "graph", "features")
    cfg = build_config(settings)
    g, x, targets = load_inputs(settings)
    seed = normalize(x, g, cfg.r)
    exact = ver.oracle_matrix(g, seed, cfg)
    if cfg.denormalize:
        exact = exact * seed.column_norms[None, :]
    failures = []

    def report(name, value, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        print(f"{status}\t{name}\t{value}\t{detail}".rstrip())
        if not ok:
            failures.append(name)

    if args.compare:
        try:
            with open(args.compare, "rb") as fh:
                emb = estimator.read_embedding(fh)
        except FormatError as exc:
            print(f"FAIL\tcompare\t{exc}")
            return EXIT_VALIDATION
        try:
            internal = to_internal(g, emb.row_ids)
        except ValidationError:
            print("FAIL\tcompare\trow ids not in graph")
            return EXIT_VALIDATION
        rows = exact[internal]
        if emb.values.shape != rows.shape:
            print("FAIL\tcompare\tshape mismatch")
            return EXIT_VALIDATION
        err = float(np.max(np.abs(emb.values - rows)))
        bound = _deterministic_bound(g, internal, cfg, seed)
        report("compare_max_abs_error", f"{err:.3e}", err <= bound, f"bound={bound:.3e}")

    res = propagate(g, x, targets, cfg, threads=settings["threads"])
    err = float(np.max(np.abs(res.embedding.values - exact[targets])))
    exact_mode = cfg.r_max <= 1e-12
    report("max_abs_error", f"{err:.3e}", err < ver.EXACT_TOL if exact_mode else True,
           "exactness threshold 1e-8" if exact_mode else "informational")

    rng = np.random.default_rng(cfg.seed)
    inv = ver.invariant_max_residual(g, seed, cfg.L, cfg.r_max, args.interrupts, rng)
    report("invariant_max_residual", f"{inv:.3e}", inv < ver.INVARIANT_TOL)

    if args.trials > 0:
        ub = ver.unbiasedness(g, seed, targets, cfg, args.trials,
                              retest_trials=args.retest_trials, base_seed=cfg.seed)
        report("unbiased_fraction", f"{ub.fraction_ok:.5f}", ub.passed,
               f"flagged={ub.flagged} still_failing={ub.still_failing}")

    if args.epsilon is not None:
        plan = estimator.plan_parameters(g, targets, cfg.L, args.epsilon)
        pcfg = PropagationConfig(cfg.L, cfg.r, cfg.weights, plan.r_max, plan.n_r, cfg.seed)
        pres = propagate(g, x, targets, pcfg)
        P = ver.oracle_matrix(g, seed, pcfg)[targets]
        v = ver.error_bound_violations(pres.embedding.values, P, g, targets, cfg.r, args.epsilon)
        total = P.size
        report("error_bound_violation_fraction", f"{v / total:.5f}",
               ver.rate_within(v, total, 1.0 / g.node_count),
               f"limit=1/n={1.0 / g.node_count:.5f} r_max={plan.r_max:.3e} n_r={plan.n_r}")

    return EXIT_VALIDATION if failures else 0


def _deterministic_bound(g: Graph, rows, cfg: PropagationConfig, seed) -> float:
    """Worst error any correct run can show: sum_l w_l d^r 2 (l+1) r_max.

    Each residue level contributes at most r_max through either S or the
    exact transition rows, whichever walks were drawn.
    """
    w = cfg.weights.as_array()
    slack = 2.0 * float(np.sum(w * (np.arange(cfg.L + 1) + 1))) * cfg.r_max
    scale = float(np.max(g.degrees[rows].astype(float) ** cfg.r))
    if cfg.denormalize:
        scale *= float(np.max(seed.column_norms))
    return slack * scale + 1e-9


def cmd_bench(args) -> int:
    settings = resolve(args)
    _require(settings, "graph", "features")
    cfg = build_config(settings)
    g, x, targets = load_inputs(settings)
    res = propagate(g, x, targets, cfg, threads=settings["threads"])
    F = res.seed.values.shape[1]
    cap = push_count_bound(cfg.L, F, cfg.r_max)
    checks = {
        "entry_cap": res.push_state.pushed_entries <= cap,
        "update_cap": res.push_state.push_count <= cap * g.max_degree,
        "walk_steps": res.walks.walk_steps == len(targets) * cfg.n_r * cfg.L,
    }
    man = _manifest(settings, cfg, res, {
        "entry_cap": cap,
        "update_cap": cap * g.max_degree,
        "max_degree": g.max_degree,
        "average_degree": g.average_degree,
        "checks": checks,
    })
    text = json.dumps(man, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    if args.assert_bounds and not all(checks.values()):
        failed = ", ".join(k for k, ok in checks.items() if not ok)
        print(f"bound check failed: {failed}", file=sys.stderr)
        return EXIT_VALIDATION
    return 0


def cmd_train(args) -> int:
    with open(args.embedding, "rb") as fh:
        emb = estimator.read_embedding(fh)
    with open(args.labels, encoding="utf-8") as fh:
        raw_labels = classifier.load_labels(fh)
    split_dir = Path(args.splits)
    parts = {}
    for name in ("train", "val", "test"):
        path = split_dir / f"{name}.txt"
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                parts[name] = classifier.load_ids(fh)
        else:
            parts[name] = np.zeros(0, dtype=np.int64)
    # row ids -> embedding positions
    pos = {int(r): i for i, r in enumerate(emb.row_ids)}
    for name, ids in parts.items():
        missing = [int(i) for i in ids if int(i) not in pos]
        if missing:
            raise ValidationError(f"{name} split ids not in embedding: {missing[:5]}")
        parts[name] = np.array([pos[int(i)] for i in ids], dtype=np.int64)
    labels = {pos[k]: v for k, v in raw_labels.items() if k in pos}
    num_classes = args.classes or (max(raw_labels.values()) + 1 if raw_labels else 0)
    split = classifier.LabeledSplit(parts["train"], parts["val"], parts["test"], labels, num_classes)
    tcfg = classifier.TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, max_epochs=args.epochs,
        l2=args.l2, hidden=args.hidden, dropout=args.dropout, momentum=args.momentum,
        patience=args.patience, seed=args.seed,
    )
    model = classifier.train(emb.values, split, tcfg)
    test_acc = classifier.accuracy(model, emb.values, split, split.test)
    lines = ["epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc"]
    for rec in model.history:
        lines.append("{epoch}\t{train_loss:.6f}\t{train_acc:.4f}\t{val_loss:.6f}\t{val_acc:.4f}".format(**rec))
    lines.append(f"test_accuracy\t{test_acc:.4f}")
    text = "\n".join(lines) + "\n"
    if args.metrics:
        Path(args.metrics).write_text(text)
    print(f"test_accuracy\t{test_acc:.4f}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    if args.kind == "sbm":
        g, x, labels = synthetic.sbm_fixture(args.n, args.p_in, args.p_out, args.flip, rng)
    elif args.kind == "er":
        g = synthetic.erdos_renyi(args.n, args.avg_degree, rng)
        x = rng.random((args.n, args.F))
        labels = None
    else:
        g = synthetic.pair_graph()
        x = np.array([[1.0], [0.0]])
        labels = None
    synthetic.write_fixture(out, g, x, labels, rng, args.train_size)
    print(f"wrote fixture to {out} (n={g.node_count}, m={g.edge_count})")
    return 0


# -- parser -------------------------------------------------------------------

def _add_propagation_flags(p):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--graph", help="edge list or GBPG binary graph")
    p.add_argument("--features", help="whitespace-separated feature rows")
    p.add_argument("--targets", help='file of node ids, or "all"')
    p.add_argument("--L", type=int, dest="L")
    p.add_argument("--r", type=float)
    p.add_argument("--rmax", type=float)
    p.add_argument("--nr", type=int)
    p.add_argument("--seed", type=int)
    w = p.add_mutually_exclusive_group()
    w.add_argument("--alpha", type=float, help="PPR weights alpha(1-alpha)^l")
    w.add_argument("--last-hop", action="store_const", const=True, dest="last_hop")
    w.add_argument("--weights", help="comma-separated w0,w1,...,wL")
    p.add_argument("--denormalize", action="store_const", const=True)
    p.add_argument("--threads", type=int, help="worker threads (default $GBP_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gbp", description="Bidirectional propagation for graph embeddings.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("precompute", help="compute the embedding matrix")
    _add_propagation_flags(p)
    p.add_argument("--out", help="GBPE output path (manifest written alongside)")
    p.add_argument("--tsv", help="also export TSV here")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("verify", help="compare against the exact oracle")
    _add_propagation_flags(p)
    p.add_argument("--trials", type=int, default=0, help="walk seeds for the unbiasedness check")
    p.add_argument("--retest-trials", type=int, default=10_000)
    p.add_argument("--interrupts", type=int, default=20, help="push interruption points")
    p.add_argument("--epsilon", type=float, help="run the planned-parameter error check")
    p.add_argument("--compare", help="GBPE file to check against the oracle")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run once and report operation counters")
    _add_propagation_flags(p)
    p.add_argument("--assert-bounds", action="store_true")
    p.add_argument("--report", help="write the JSON report here too")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="train the softmax head on an embedding")
    p.add_argument("--embedding", required=True)
    p.add_argument("--labels", required=True, help="row_id<TAB>class lines")
    p.add_argument("--splits", required=True, help="directory with train.txt/val.txt/test.txt")
    p.add_argument("--classes", type=int)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--hidden", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics", help="per-epoch TSV output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="write a synthetic fixture")
    p.add_argument("kind", choices=["sbm", "er", "pair"])
    p.add_argument("out_dir")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p-in", type=float, default=0.02)
    p.add_argument("--p-out", type=float, default=0.002)
    p.add_argument("--flip", type=float, default=0.1)
    p.add_argument("--avg-degree", type=float, default=8.0)
    p.add_argument("--F", type=int, default=4)
    p.add_argument("--train-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gbp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ValidationError) as exc:
        print(f"gbp: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"gbp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

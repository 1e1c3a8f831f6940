"""Command-line interface.

Every artifact embeds the run configuration (including the seed) and is a
deterministic function of it.  Without ``--out`` the artifact goes to
stdout; with ``--out DIR`` it is written to ``DIR/<command>.<ext>`` and a
one-line summary is printed instead.  Failures print
``error: <code>: <message>`` on stderr and exit nonzero (1 for input and
computation errors, 2 for usage errors, 3 for file errors).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .bass_serre import build_ball, homogenize
from .errors import CoarseTreesError
from .formats import dumps, load_graph, load_local_type, load_matrix
from .graph_core import classify_with_trace, reduce_graph
from .invariants import abs_jordan_form, bs_not_commensurable, hnn_qi_equivalent
from .oriented_tree import (
    LazyTree,
    Lamination,
    build_lamination,
    check_partition,
    classify_local_type,
    lamination_to_dot,
    lamination_to_json,
)
from .qi_builder import QiMap, build_collapsed_iso, measure_qi_report
from .warped_metric import compare_metrics

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FILE = 3
EAGER_ISO_DEPTH = 6
MAP_EXPORT_DEPTH = 4


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    depth: int | None = None
    beta: float | None = None
    beta2: float | None = None
    window_k: float | None = None
    samples: int | None = None
    seed: int = 0
    out: str | None = None
    format: str = "json"
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("out")
        out["version"] = __version__
        return out


class UsageError(CoarseTreesError):
    code = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        print(f"error: {UsageError.code}: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# rendering


def _render_json(cfg: RunConfig, result: dict) -> str:
    return dumps({"config": cfg.to_json(), "result": result})


def _header(cfg: RunConfig, prefix: str) -> str:
    return f"{prefix} config: {json.dumps(cfg.to_json(), sort_keys=True)}\n"


def _render(cfg: RunConfig, result: dict, csv_text: str | None = None, dot_text: str | None = None) -> str:
    if cfg.format == "json":
        return _render_json(cfg, result)
    if cfg.format == "csv":
        if csv_text is None:
            raise UsageError(f"{cfg.command} has no csv output")
        return _header(cfg, "#") + csv_text
    if dot_text is None:
        raise UsageError(f"{cfg.command} has no dot output")
    return _header(cfg, "//") + dot_text


def _clean(x: Any) -> Any:
    """Replace non-finite floats so artifacts stay valid JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# commands; each returns (artifact text, summary line)


def cmd_classify(cfg: RunConfig) -> tuple[str, str]:
    g = load_graph(cfg.inputs[0])
    label, reduced, trace = classify_with_trace(g)
    result = {
        "label": str(label),
        "kind": label.kind,
        "n": label.n,
        "reduced": reduced.to_json(),
        "trace": [
            {
                "edge": {"u": g.label(s.edge.u), "v": g.label(s.edge.v), "iu": s.edge.iu, "iv": s.edge.iv},
                "absorbed": s.absorbed,
                "survivor": s.survivor,
                "factor": s.factor,
            }
            for s in trace
        ],
    }
    return _render(cfg, result), str(label)


def cmd_ball(cfg: RunConfig) -> tuple[str, str]:
    g = load_graph(cfg.inputs[0])
    root = cfg.extra.get("root")
    root = g.vertices[0] if root is None else _match_label(g.vertices, root)
    ball = build_ball(g, root, cfg.depth)
    result = {"root": root, **ball.to_json(), "height_bounded": ball.height_bounded}
    return _render(cfg, result, dot_text=ball.to_dot()), f"{len(ball)} vertices"


def _match_label(labels: Sequence, raw: str):
    for lab in labels:
        if str(lab) == raw:
            return lab
    raise UsageError(f"no vertex labelled {raw!r}")


def cmd_homogenize(cfg: RunConfig) -> tuple[str, str]:
    g = load_graph(cfg.inputs[0])
    if cfg.extra.get("reduce"):
        g = reduce_graph(g)
    tree = cfg.extra.get("tree")
    lt = homogenize(g, tree)
    result = {
        "graph": g.to_json(),
        "local_type": lt.to_json(),
        "valence": lt.valence,
        "kind": _kind_or_none(lt),
    }
    return _render(cfg, result), str(lt)


def _kind_or_none(lt) -> str | None:
    try:
        return classify_local_type(lt).name
    except CoarseTreesError:
        return None


def cmd_laminate(cfg: RunConfig) -> tuple[str, str]:
    lt = load_local_type(cfg.inputs[0])
    tree = LazyTree(lt)
    lam, slopes = build_lamination(tree, cfg.beta, cfg.depth, track_slopes=True)
    part = check_partition(lam)
    worst = float(slopes.max()) if len(slopes) else 0.0
    result = {
        **lamination_to_json(lam),
        "partition": part,
        "worst_slope_deviation": worst,
        "slope_ok": worst <= lam.C + 1e-9,
    }
    summary = f"{len(lam.region_lines())} lines, worst deviation {worst:.6g} (C = {lam.C:.6g})"
    return _render(cfg, result, dot_text=lamination_to_dot(lam)), summary


def cmd_qi_build(cfg: RunConfig) -> tuple[str, str]:
    t1, t2 = (LazyTree(load_local_type(p)) for p in cfg.inputs)
    lam1, lam2 = Lamination(t1, cfg.beta), Lamination(t2, cfg.beta2)
    iso = build_collapsed_iso(lam1, lam2, cfg.window_k, depth=min(cfg.depth, EAGER_ISO_DEPTH))
    fwd = QiMap(lam1, lam2, iso)
    report = measure_qi_report(fwd, cfg.samples, cfg.seed, cfg.depth, reverse=fwd.reverse())
    export = min(cfg.depth, MAP_EXPORT_DEPTH)
    result = {
        "report": report.to_json(),
        "beta0": [lam1.beta0, lam2.beta0],
        "C_lines": [lam1.C, lam2.C],
        "orientation_bound": lam1.C + lam2.C + lam2.beta + iso.realized_K,
        "iso_depth": min(cfg.depth, EAGER_ISO_DEPTH),
        "line_pairs": sorted([a, b] for a, b in iso.materialize(min(cfg.depth, EAGER_ISO_DEPTH)).items()),
        "map_depth": export,
        "map_pairs": [[u, v] for u, v in fwd.pairs(export)],
    }
    summary = f"A = B = {report.A:.6g}, C = {report.C:.6g}, K = {report.K:.6g}"
    return _render(cfg, _clean(result), csv_text=report.to_csv()), summary


def cmd_metric_compare(cfg: RunConfig) -> tuple[str, str]:
    g = load_graph(cfg.inputs[0])
    ball = build_ball(g, g.vertices[0], cfg.depth)
    cmp = compare_metrics(
        ball,
        cfg.samples,
        cfg.seed,
        max_log_dx=cfg.extra["max_log_dx"],
        inner_radius=cfg.extra.get("inner_radius"),
    )
    summary = f"lambda = {cmp.lam:.6g} over {cmp.samples} pairs ({cmp.excluded_uncertified} excluded)"
    return _render(cfg, cmp.to_json(), csv_text=cmp.to_csv()), summary


def cmd_invariants(cfg: RunConfig) -> tuple[str, str]:
    result: dict[str, Any] = {}
    bs = cfg.extra.get("bs")
    if bs is not None:
        a, b, c, d = bs
        result["bs_not_commensurable"] = bs_not_commensurable(a, b, c, d)
    paths = cfg.inputs
    if paths:
        tol = cfg.extra["tol"]
        mats = [load_matrix(p) for p in paths]
        result["abs_jordan_forms"] = [abs_jordan_form(m, tol).to_json() for m in mats]
        if len(mats) == 2:
            result["hnn_qi"] = hnn_qi_equivalent(mats[0], mats[1], cfg.extra["solvable"], tol).to_json()
    if not result:
        raise UsageError("invariants needs --bs and/or matrix files")
    bits = []
    if "bs_not_commensurable" in result:
        bits.append(f"not commensurable: {result['bs_not_commensurable']}")
    if "hnn_qi" in result:
        bits.append(f"qi equivalent: {result['hnn_qi']['equivalent']}")
    return _render(cfg, result), "; ".join(bits) or "ok"


COMMANDS = {
    "classify": cmd_classify,
    "ball": cmd_ball,
    "homogenize": cmd_homogenize,
    "laminate": cmd_laminate,
    "qi-build": cmd_qi_build,
    "metric-compare": cmd_metric_compare,
    "invariants": cmd_invariants,
}

EXTENSIONS = {"json": "json", "csv": "csv", "dot": "dot"}


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(raw: str) -> list[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None


def _common(p: argparse.ArgumentParser, *, depth: int | None = None, formats=("json",)) -> None:
    if depth is not None:
        p.add_argument("--depth", type=int, default=depth, help=f"ball radius (default {depth})")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="output directory; the artifact goes to stdout if omitted")
    p.add_argument("--format", choices=formats, default=formats[0])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coarse-trees", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="classify a graph of Z's")
    p.add_argument("graph")
    _common(p)

    p = sub.add_parser("ball", help="ball of the Bass-Serre tree")
    p.add_argument("graph")
    p.add_argument("--root", help="root vertex label (default: first vertex)")
    _common(p, depth=3, formats=("json", "dot"))

    p = sub.add_parser("homogenize", help="local type of the homogenized tree")
    p.add_argument("graph")
    p.add_argument("--tree", type=_int_list, help="spanning-tree edge ids (default: BFS tree)")
    p.add_argument("--reduce", action="store_true", help="reduce the graph first")
    _common(p)

    p = sub.add_parser("laminate", help="lamination of a homogeneous tree by lines of slope beta")
    p.add_argument("local_type", help="local type file or bs:m,n / oriented:up,down")
    p.add_argument("--beta", type=float, required=True)
    _common(p, depth=6, formats=("json", "dot"))

    p = sub.add_parser("qi-build", help="coarsely orientation preserving quasi-isometry")
    p.add_argument("source", help="source local type")
    p.add_argument("target", help="target local type")
    p.add_argument("--beta", type=float, required=True, help="source slope")
    p.add_argument("--beta2", type=float, required=True, help="target slope")
    p.add_argument("--window-k", type=float, default=1.5, help="ladder tolerance K (default 1.5)")
    p.add_argument("--samples", type=int, default=1000)
    _common(p, depth=6, formats=("json", "csv"))

    p = sub.add_parser("metric-compare", help="distance formula vs oracle on a ball")
    p.add_argument("graph")
    p.add_argument("--samples", type=int, default=500, help="sampled point pairs")
    p.add_argument("--max-log-dx", type=float, default=10.0)
    p.add_argument("--inner-radius", type=int, help="draw tree points from this smaller ball")
    _common(p, depth=6, formats=("csv", "json"))

    p = sub.add_parser("invariants", help="commensurability and HNN invariants")
    p.add_argument("matrices", nargs="*", help="zero, one or two matrix files")
    p.add_argument("--bs", type=_int_list, help="a,b,c,d: compare BS(a,b) with BS(c,d)")
    p.add_argument("--solvable", action="store_true", help="require a rational power")
    p.add_argument("--tol", type=float, default=1e-9)
    _common(p)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cmd = ns.command
    inputs = {
        "classify": lambda: [ns.graph],
        "ball": lambda: [ns.graph],
        "homogenize": lambda: [ns.graph],
        "laminate": lambda: [ns.local_type],
        "qi-build": lambda: [ns.source, ns.target],
        "metric-compare": lambda: [ns.graph],
        "invariants": lambda: list(ns.matrices),
    }[cmd]()
    cfg = RunConfig(
        command=cmd,
        inputs=inputs,
        depth=getattr(ns, "depth", None),
        beta=getattr(ns, "beta", None),
        beta2=getattr(ns, "beta2", None),
        window_k=getattr(ns, "window_k", None),
        samples=getattr(ns, "samples", None),
        seed=ns.seed,
        out=ns.out,
        format=ns.format,
    )
    for key in ("root", "tree", "reduce", "max_log_dx", "inner_radius", "bs", "solvable", "tol"):
        if hasattr(ns, key):
            cfg.extra[key] = getattr(ns, key)
    if cfg.depth is not None and cfg.depth < 0:
        raise UsageError("--depth must be >= 0")
    if cfg.samples is not None and cfg.samples < 1:
        raise UsageError("--samples must be >= 1")
    if cmd == "invariants":
        if len(inputs) > 2:
            raise UsageError("invariants takes at most two matrix files")
        if cfg.extra["bs"] is not None and len(cfg.extra["bs"]) != 4:
            raise UsageError("--bs needs exactly four integers a,b,c,d")
    return cfg


def dispatch(cfg: RunConfig) -> tuple[str, str]:
    return COMMANDS[cfg.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        text, summary = dispatch(cfg)
        if cfg.out is None:
            sys.stdout.write(text)
        else:
            out_dir = Path(cfg.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"{cfg.command}.{EXTENSIONS[cfg.format]}"
            path.write_text(text, encoding="utf-8")
            print(summary)
    except UsageError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CoarseTreesError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: FileError: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ValueError as exc:
        print(f"error: ValueError: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Operator command line: anchors, infer, eval, params, flops, render.

Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand is
deterministic given its flags, inputs, and seed; batch inference may fan
out across worker threads (capped by the GAANET_THREADS environment
variable) without changing any output byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .anchors import (
    AnchorSet,
    GAConfig,
    best_possible_recall,
    evolve_anchors,
    fitness,
    kmeans_anchors,
    load_labels,
)
from .errors import GaanetError
from .graph import build_graph, decode_detections, forward, parse_config
from .metrics import (
    evaluate,
    labelset_to_ground_truth,
    nms,
    read_predictions,
    write_predictions,
)
from .ops import letterbox, match_channels
from .pnm import read_pnm, write_pnm
from .render import render_detections
from .weights import init_random, read_weights

DEFAULT_NAMES = "bird,drone,helicopter,plane"


def default_config_path() -> Path:
    return Path(str(resources.files("gaanet") / "configs" / "gaanet.cfg"))


def _worker_count() -> int:
    env = os.environ.get("GAANET_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gaanet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p, config=True, seed=True):
        if config:
            p.add_argument("--config", default=None, help="network config file")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--img-size", type=int, default=None)

    p = sub.add_parser("anchors", help="compute dataset anchors")
    p.add_argument("labels_root", help="dataset root holding images/ and labels/")
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--generations", type=int, default=1000)
    p.add_argument("--thr", type=float, default=0.25)
    p.add_argument("--out", default=None, help="also write the report here")
    add_shared(p, config=False)

    p = sub.add_parser("infer", help="detect objects in PNM images")
    p.add_argument("images", nargs="+", help="P5/P6 image files")
    p.add_argument("--weights", default=None, help="GAAW archive (omit for seeded random)")
    p.add_argument("--conf", type=float, default=0.25)
    p.add_argument("--iou", type=float, default=0.45)
    p.add_argument("--out", default="detections.txt")
    p.add_argument("--render-dir", default=None, help="write overlay PNMs here")
    p.add_argument("--names", default=DEFAULT_NAMES)
    add_shared(p)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--pred", required=True, help="predictions file from infer")
    p.add_argument("--labels", required=True, help="dataset root with labels/")
    p.add_argument("--names", default=DEFAULT_NAMES)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("params", help="parameter accounting for a config")
    add_shared(p, seed=False)

    p = sub.add_parser("flops", help="flop accounting for a config")
    add_shared(p, seed=False)

    p = sub.add_parser("render", help="draw detections on an image")
    p.add_argument("--image", required=True)
    p.add_argument("--dets", required=True, help="predictions file")
    p.add_argument("--names", default=DEFAULT_NAMES)
    p.add_argument("--out", required=True)
    return parser


def _load_graph(args):
    path = Path(args.config) if args.config else default_config_path()
    config = parse_config(path.read_text())
    if getattr(args, "img_size", None):
        config = replace(config, input_size=args.img_size)
    return build_graph(config)


# ---------------------------------------------------------------------------
# subcommands


def run_anchors(args) -> int:
    labels = load_labels(args.labels_root)
    for w in labels.warnings[:20]:
        print(f"warning: {w}", file=sys.stderr)
    img_size = args.img_size or 256
    seeds = kmeans_anchors(labels, k=args.k, input_size=img_size, seed=args.seed)
    seed_fit = fitness(seeds, labels, args.thr, img_size)
    evolved, history = evolve_anchors(
        seeds,
        labels,
        GAConfig(generations=args.generations, seed=args.seed),
        input_size=img_size,
        threshold=args.thr,
    )
    bpr = best_possible_recall(evolved, labels, args.thr, img_size)
    rounded = [int(round(v)) for v in evolved.to_flat()]
    lines = [
        f"boxes: {labels.n_boxes} (rejected rows: {labels.rejected_rows})",
        f"seed fitness: {seed_fit:.4f}",
        f"evolved fitness: {history[-1]:.4f}",
        f"best possible recall: {bpr:.4f}",
        "anchors: " + ",".join(str(v) for v in rounded),
    ]
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out:
        Path(args.out).write_text(report)
    return 0


def _infer_one(graph, archive, path, conf, iou_thr, names, render_dir):
    image = read_pnm(path)
    started = time.perf_counter()
    boxed, record = letterbox(
        match_channels(image, graph.config.input_channels), graph.config.input_size
    )
    heads = forward(graph, archive, boxed)
    dets = decode_detections(
        heads, graph.config.anchors, graph.strides, conf, graph.config.input_size
    )
    kept = nms(dets, iou_thr)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    image_id = Path(path).stem
    rows = []
    mapped_dets = []
    for d in kept:
        (x1, y1, x2, y2), = record.boxes_to_image(np.array([d.box]))
        if x2 <= x1 or y2 <= y1:
            continue
        rows.append((image_id, d.class_id, d.confidence, x1, y1, x2, y2))
        mapped_dets.append(replace(d, box=(float(x1), float(y1), float(x2), float(y2))))
    if render_dir:
        out = render_detections(image, mapped_dets, names)
        write_pnm(Path(render_dir) / (image_id + ".ppm"), out)
    return rows, elapsed_ms


def run_infer(args) -> int:
    graph = _load_graph(args)
    if args.weights:
        archive = read_weights(args.weights)
    else:
        print(f"no --weights given, using seeded random archive (seed {args.seed})")
        archive = init_random(graph, seed=args.seed)
    missing = [n for n in graph.weight_manifest() if n not in archive]
    if missing:
        raise GaanetError(f"archive is missing {len(missing)} weights, e.g. {missing[:3]}")
    names = args.names.split(",")
    if args.render_dir:
        Path(args.render_dir).mkdir(parents=True, exist_ok=True)

    all_rows = []
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = [
            pool.submit(
                _infer_one, graph, archive, p, args.conf, args.iou, names, args.render_dir
            )
            for p in args.images
        ]
        for path, fut in zip(args.images, futures):
            rows, elapsed_ms = fut.result()
            all_rows.extend(rows)
            print(f"{path}: {len(rows)} detections in {elapsed_ms:.1f} ms")
    write_predictions(args.out, all_rows)
    print(f"wrote {len(all_rows)} rows to {args.out}")
    return 0


def run_eval(args) -> int:
    preds = read_predictions(args.pred)
    labels = load_labels(args.labels)
    gts = labelset_to_ground_truth(labels)
    names = args.names.split(",")
    report = evaluate(preds, gts, names, iou_threshold=args.iou)
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"wrote report to {args.out}")
    return 0


def run_params(args) -> int:
    graph = _load_graph(args)
    rows = graph.per_node_params()
    print(f"{'idx':>4} {'type':12} {'ch':>5} {'params':>12}")
    for idx, kind, ch, count in rows:
        print(f"{idx:>4} {kind:12} {ch:>5} {count:>12,}")
    total = graph.param_count()
    conv_units = sum(1 for n in graph.weight_manifest() if n.endswith(".weight"))
    print(f"total parameters: {total:,} ({total/1e6:.3f} M)")
    print(f"graph nodes: {len(graph.nodes)}, convolution units: {conv_units}")
    return 0


def run_flops(args) -> int:
    graph = _load_graph(args)
    size = args.img_size or graph.config.input_size
    print(f"{'idx':>4} {'type':12} {'out hw':>10} {'flops':>16}")
    for idx, kind, h, w, flops in graph.per_node_flops(size):
        print(f"{idx:>4} {kind:12} {h:>4}x{w:<5} {flops:>16,}")
    total = graph.flop_count(size)
    print(f"total: {total:,} flops ({total/1e9:.3f} GFLOPs at {size}x{size})")
    return 0


def run_render(args) -> int:
    image = read_pnm(args.image)
    preds = read_predictions(args.dets)
    image_id = Path(args.image).stem
    dets = preds.get(image_id, [])
    names = args.names.split(",")
    out = render_detections(
        image, dets, names, warn=lambda m: print(f"warning: {m}", file=sys.stderr)
    )
    write_pnm(args.out, out)
    print(f"rendered {len(dets)} detections to {args.out}")
    return 0


COMMANDS = {
    "anchors": run_anchors,
    "infer": run_infer,
    "eval": run_eval,
    "params": run_params,
    "flops": run_flops,
    "render": run_render,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (GaanetError, OSError) as exc:
        print(f"gaanet {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: synth, train, detect, eval, extract-stmh.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .dataset import AnnotatedVideo, Dataset, SynthOptions, synth_dataset
from .errors import DataError, InvariantError
from .evaluation import (GroundTruth, format_report, load_detections, load_ground_truth, mean_ap, pr_curve,
                         match_detections, roc_auc)
from .proposals import load_proposals, proposal_path
from .scoring import PrecomputedScores
from .stmh import extract_chunks
from .synth import SceneSpec
from .video import load_sequence
from .pipeline import detection_rows
from .workflow import detect_item, load_models, save_models, train_models, write_manifest

log = logging.getLogger("stloc")

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _config(args, **extra) -> RunConfig:
    over = dict(seed=args.seed, **extra)
    for name in ("topk", "ntracks", "theta"):
        if getattr(args, name, None) is not None:
            over[name] = getattr(args, name)
    return load_config(args.config, **over)


# --- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    base = SceneSpec.load(args.spec) if args.spec else SceneSpec()
    if args.frames is not None:
        base = replace(base, num_frames=args.frames)
    base.validate()
    extent = None
    if args.untrimmed:
        lo, hi = (float(x) for x in args.untrimmed.split(","))
        if not 0 < lo <= hi <= 1:
            raise DataError(f"--untrimmed fractions must satisfy 0 < lo <= hi <= 1, got {args.untrimmed}")
        extent = (lo, hi)
    opts = SynthOptions(count=args.count, n_classes=args.classes, seed=args.seed or 0,
                        test_fraction=args.test_fraction, extent_fraction=extent)
    ds = synth_dataset(args.out, base, opts)
    print(f"wrote {args.count} videos of {len(ds.classes)} classes to {args.out}")
    return 0


# --- train ------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _config(args, dataset=str(args.dataset), model_dir=str(args.out_model_dir))
    ds = Dataset(cfg.dataset)
    items = ds.items(ds.split(args.split), cfg.scorer(), cfg.flow(), args.flow_cache, cfg.stmh_nt, cfg.stmh_ns)
    if not items:
        raise DataError(f"split {args.split!r} of {cfg.dataset} is empty")
    models = train_models(items, ds.classes, cfg)
    save_models(models, cfg.model_dir, cfg)
    print(f"trained {len(models.classes)} classes on {len(items)} videos -> {cfg.model_dir}")
    return 0


# --- detect -----------------------------------------------------------------

_WORKER = {}


def _init_worker(model_dir, params, table):
    models, _ = load_models(model_dir)
    _WORKER.update(models=models, params=params, table=table)


def _detect_one(item):
    dets = detect_item(item, _WORKER["models"], _WORKER["params"], _WORKER["table"])
    return len(dets), [r for d in dets for r in detection_rows(d)]


class _LooseVideo:
    """A video directory given on the command line, with optional proposal files."""

    def __init__(self, path: Path, proposals: Path | None, cfg: RunConfig, flow_cache):
        self.item = AnnotatedVideo(path.name, path.parent, (), cfg.scorer(), cfg.flow(), flow_cache,
                                   cfg.stmh_nt, cfg.stmh_ns, video=load_sequence(path, path.name))
        self.props_dir = proposals

    @property
    def video(self):
        return self.item.video

    @property
    def flows(self):
        return self.item.flows

    @property
    def proposals(self):
        d = self.props_dir
        if d is None and proposal_path(self.item.root / self.item.video_id, 1).exists():
            d = self.item.root / self.item.video_id
        if d is None:
            return self.item.proposals
        v = self.video
        return [load_proposals(proposal_path(d, t), t, v.width, v.height) for t in range(1, len(v) + 1)]


def cmd_detect(args) -> int:
    models, mcfg = load_models(args.model_dir)
    cfg = _config(args, model_dir=str(args.model_dir),
                  **{k: getattr(mcfg, k) for k in ("scorer_grid", "scorer_bins", "scorer_motion", "scorer_patch",
                                                   "stmh_nt", "stmh_ns")})
    if args.scores:
        cfg = cfg.with_values(scorer_kind="precomputed", scores_file=str(args.scores))
    table = PrecomputedScores.load(cfg.scores_file) if cfg.scores_file else None
    if args.dataset:
        ds = Dataset(args.dataset)
        cfg = cfg.with_values(dataset=str(args.dataset))
        items = ds.items(ds.split(args.split), cfg.scorer(), cfg.flow(), args.flow_cache, cfg.stmh_nt, cfg.stmh_ns)
    else:
        if len(args.video) > 1 and args.proposals:
            raise DataError("--proposals applies to a single --video")
        props = Path(args.proposals) if args.proposals else None
        items = [_LooseVideo(Path(v), props, cfg, args.flow_cache) for v in args.video]
    params = cfg.pipeline()
    if args.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker,
                                 initargs=(args.model_dir, params, table)) as ex:
            chunks = list(ex.map(_detect_one, items))
    else:
        _WORKER.update(models=models, params=params, table=table)
        chunks = [_detect_one(it) for it in items]
    out = Path(args.out)
    text = f"# stloc {__version__} detections: video_id class score t_b t_e, then t x y w h per frame\n"
    _atomic_write(out, text + "".join(r for _, rows in chunks for r in rows))
    write_manifest(out.with_name(out.name + ".manifest"), cfg,
                   {"videos": ",".join(getattr(it, "video_id", None) or it.item.video_id for it in items)})
    n = sum(k for k, _ in chunks)
    print(f"{n} detections -> {out}")
    return 0


# --- eval -------------------------------------------------------------------

def _eval_gts(args) -> list[GroundTruth]:
    if args.ground_truth:
        gts = load_ground_truth(args.ground_truth)
    elif args.dataset:
        ds = Dataset(args.dataset)
        ids = set(ds.split(args.split))
        gts = [g for g in ds.ground_truth if g.video_id in ids]
    else:
        raise DataError("eval needs --ground-truth or --dataset")
    if args.videos:
        ids = {ln.strip() for ln in Path(args.videos).read_text().splitlines() if ln.strip()}
        gts = [g for g in gts if g.video_id in ids]
    return gts


def cmd_eval(args) -> int:
    dets = load_detections(args.detections)
    gts = _eval_gts(args)
    classes = sorted({g.label for g in gts} | {d.label for d in dets})
    results = []
    for delta in args.delta:
        r = mean_ap(dets, gts, delta, classes)
        pts, auc = roc_auc(dets, gts, delta, classes)
        r.auc, r.roc = auc, pts
        results.append(r)
        if args.curves:
            d = Path(args.curves)
            _atomic_write(d / f"roc_{delta:g}.txt", "".join(f"{x:.9g} {y:.9g}\n" for x, y in pts))
            for c in classes:
                _, tp, n_gt = match_detections(dets, gts, delta, c)
                if n_gt:
                    rec, prec = pr_curve(tp, n_gt)
                    _atomic_write(d / f"pr_{c}_{delta:g}.txt",
                                  "".join(f"{a:.9g} {b:.9g}\n" for a, b in zip(rec, prec)))
    report = format_report(results)
    if args.out:
        _atomic_write(Path(args.out), report)
    sys.stdout.write(report)
    return 0


# --- extract-stmh -----------------------------------------------------------

def cmd_extract_stmh(args) -> int:
    cfg = _config(args, dataset=str(args.dataset))
    ds = Dataset(cfg.dataset)
    items = ds.items(ds.split(args.split), cfg.scorer(), cfg.flow(), args.flow_cache, cfg.stmh_nt, cfg.stmh_ns)
    rows = []
    for it in items:
        for k, g in enumerate(it.gts):
            chunks = extract_chunks(g, cfg.chunk_length, cfg.chunk_stride)
            D = it.stmh.descriptors(chunks)
            for ch, vec in zip(chunks, D):
                vals = " ".join(f"{x:.9g}" for x in vec)
                rows.append(f"{it.video_id} {g.label} {k} {ch.start} {len(vec)} {vals}\n")
    _atomic_write(Path(args.out), "".join(rows))
    write_manifest(Path(args.out).with_name(Path(args.out).name + ".manifest"), cfg)
    print(f"{len(rows)} descriptors -> {args.out}")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file (supports include)")
    common.add_argument("--seed", type=int, default=None, help="seed recorded in the run manifest")
    common.add_argument("--jobs", type=int, default=1, help="worker processes across videos")
    common.add_argument("--flow-cache", default=None, help="directory for cached optical flow")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="stloc", description="Spatio-temporal action localisation.")
    p.add_argument("--version", action="version", version=f"stloc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--spec", help="base scene spec (key = value)")
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--untrimmed", default=None, metavar="LO,HI", help="action covers this fraction of frames")
    s.add_argument("--test-fraction", type=float, default=0.25)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train action and STMH banks and duration priors")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out-model-dir", required=True)
    t.add_argument("--split", default="train")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("detect", parents=[common], help="detect actions in videos")
    d.add_argument("--model-dir", required=True)
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--video", nargs="+", help="frame directories")
    src.add_argument("--dataset")
    d.add_argument("--split", default="test")
    d.add_argument("--proposals", help="directory of props_%%06d.txt files for a single video")
    d.add_argument("--scores", help="precomputed proposal scores file")
    d.add_argument("--out", required=True)
    d.add_argument("--topk", type=int)
    d.add_argument("--ntracks", type=int)
    d.add_argument("--theta", type=float)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", parents=[common], help="mAP / AUC report of a detection file")
    e.add_argument("--detections", required=True)
    e.add_argument("--ground-truth")
    e.add_argument("--dataset")
    e.add_argument("--split", default="test")
    e.add_argument("--videos", help="file listing the video ids to evaluate")
    e.add_argument("--delta", type=float, nargs="+", default=[0.2, 0.5])
    e.add_argument("--out")
    e.add_argument("--curves", help="directory for ROC and PR point files")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("extract-stmh", parents=[common], help="dump STMH descriptors of ground-truth chunks")
    x.add_argument("--dataset", required=True)
    x.add_argument("--split", default="train")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_extract_stmh)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"stloc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, AssertionError) as exc:
        print(f"stloc: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, ValueError, KeyError) as exc:
        print(f"stloc: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

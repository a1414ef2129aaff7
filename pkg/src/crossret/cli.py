"""Command-line entry point: ``crossret <subcommand> [flags]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config
from .errors import CrossretError, NumericError
from .evalkit import (
    gen_synthetic,
    cosine_similarity,
    load_ground_truth,
    metrics_report,
    report_from_rankings,
    save_ground_truth,
)
from .fileio import load_matrix, read_ppm, save_matrix
from .smr import SmrParams, smr_rerank

DEFAULT_GRID = tuple(round(0.5 + 0.1 * i, 10) for i in range(16))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _fmt(v: float) -> str:
    return repr(float(v))


def _resolve_config(args) -> RunConfig:
    overrides = {}
    for name in ("seed", "k", "gamma1", "gamma2", "direction", "out"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return load_config(args.config, **overrides)


# ---------------------------------------------------------------- subcommands

def cmd_encode_demo(args, cfg: RunConfig, out) -> int:
    from .gswin import EncodeTrace, image_encode, init_image_encoder

    image = read_ppm(args.image)
    h, w, _ = image.shape
    gcfg = cfg.gswin()
    if h != w:
        raise CrossretError(f"{args.image}: square images only, got {w}x{h}")
    gcfg = dataclasses.replace(gcfg, image_size=h)
    gcfg.validate()
    weights = init_image_encoder(gcfg, cfg.seed)
    trace = EncodeTrace()
    tokens, feature = image_encode(image, gcfg, weights, trace)
    print(f"image {h}x{w}x3 patch {gcfg.patch_size} window {gcfg.win} seed {cfg.seed}", file=out)
    print("stage,height,width,channels,blocks,gwg_layers,global_window", file=out)
    for s in trace.stages:
        gwin = "x".join(str(v) for v in s.global_window)
        print(f"{s.stage},{s.extent[0]},{s.extent[1]},{s.channels},{s.blocks},{s.gwg_layers},{gwin}", file=out)
    print(f"tokens {'x'.join(str(v) for v in tokens.shape)}", file=out)
    print(f"blocks_run {trace.blocks_run}", file=out)
    print(f"feature_dim {feature.size} norm {_fmt(np.linalg.norm(feature))}", file=out)
    print("feature " + ",".join(f"{v:.12g}" for v in feature), file=out)
    if args.feature_out:
        save_matrix(feature[None, :], args.feature_out)
    return 0


DEMO_WORDS = (
    "a an the two many some several green white grey red large small dense sparse "
    "baseball field fields playground airport runway runways plane planes building buildings "
    "road roads river lake trees forest farmland parking lot cars bridge beach sea "
    "residential area houses near beside around with of in on and is are"
).split()

DEMO_CAPTIONS = (
    "two baseball fields near some green trees",
    "many planes are parked beside the airport runway",
    "a river with a bridge across it near residential houses",
    "a large parking lot with many cars beside a building",
    "some white buildings and a playground with a red runway",
    "dense green forest around a small lake",
    "farmland fields in many green and grey areas",
    "a beach beside the sea with some buildings",
)


def cmd_loss_demo(args, cfg: RunConfig, out) -> int:
    from .gswin import image_encode, init_image_encoder
    from .losses import LossBatch, MomentumQueue, itc_loss, itm_loss, mlm_loss, total_loss, triplet_opt_loss
    from .text import (
        Vocabulary,
        init_fusion,
        init_text_encoder,
        mlm_logits,
        mlm_mask,
        mm_encode,
        pad_mask,
        project_image_tokens,
        text_encode,
        tokenize_embed,
    )

    n = args.batch
    if not 2 <= n <= len(DEMO_CAPTIONS):
        raise UsageError(f"--batch must be between 2 and {len(DEMO_CAPTIONS)}")
    rng = np.random.default_rng(cfg.seed)
    vocab = Vocabulary.load(cfg.vocab) if cfg.vocab else Vocabulary(DEMO_WORDS)
    gcfg = cfg.gswin()
    img_w = init_image_encoder(gcfg, cfg.seed)
    txt_w = init_text_encoder(len(vocab), cfg.text_len, cfg.text_width, cfg.text_heads,
                              cfg.text_layers, gcfg.proj_dim, seed=cfg.seed + 1)
    fus_w = init_fusion(len(vocab), gcfg.stage_channels(3), cfg.text_width, cfg.text_heads,
                        cfg.fusion_layers, seed=cfg.seed + 2)

    images = rng.uniform(size=(n, gcfg.image_size, gcfg.image_size, 3))
    captions = DEMO_CAPTIONS[:n]
    img_tokens, F = zip(*(image_encode(im, gcfg, img_w) for im in images))
    ids = [vocab.encode(c, cfg.text_len) for c in captions]
    txt = [text_encode(tokenize_embed(c, vocab, txt_w.token_emb, cfg.text_len, txt_w.pos_emb), txt_w, pad_mask(i))
           for c, i in zip(captions, ids)]
    txt_tokens, G = zip(*txt)
    F, G = np.array(F), np.array(G)

    q_img = MomentumQueue(cfg.queue_size, gcfg.proj_dim)
    q_txt = MomentumQueue(cfg.queue_size, gcfg.proj_dim)
    q_img.push(F)
    q_txt.push(G)
    batch = LossBatch(F, G)
    itc, _ = itc_loss(batch, q_img, q_txt, cfg.tau)
    triplet, _ = triplet_opt_loss(batch.S, cfg.alpha)

    img_m = [project_image_tokens(t, fus_w) for t in img_tokens]
    probs, labels, mlm_terms = [], [], []
    for i in range(n):
        neg = int(rng.integers(n - 1))
        neg += neg >= i
        for img_idx, label in ((i, 1), (neg, 0)):
            _, p = mm_encode(img_m[img_idx], txt_tokens[i], fus_w, pad_mask(ids[i]))
            probs.append(p)
            labels.append(label)
        masked = mlm_mask(ids[i], cfg.mlm_prob, cfg.seed * 1000 + i, len(vocab))
        v = txt_w.token_emb[masked.ids] + txt_w.pos_emb[: cfg.text_len]
        m_tokens, _ = text_encode(v, txt_w, pad_mask(masked.ids))
        fused, _ = mm_encode(img_m[i], m_tokens, fus_w, pad_mask(masked.ids))
        if any(masked.mask_flags):
            mlm_terms.append(mlm_loss(mlm_logits(fused, fus_w), masked))
    mlm = float(np.mean(mlm_terms)) if mlm_terms else 0.0
    itm = itm_loss(probs, labels)
    total = total_loss(itc, triplet, mlm, itm)
    print(f"batch {n} seed {cfg.seed} tau {cfg.tau} alpha {cfg.alpha} queue {len(q_txt)}/{cfg.queue_size}", file=out)
    for name, value in (("itc", itc), ("triplet", triplet), ("mlm", mlm), ("itm", itm), ("total", total)):
        print(f"{name:<8} {value:.12f}", file=out)
    return 0


def cmd_grad_check(args, cfg: RunConfig, out) -> int:
    from .gradcheck import run_suite

    results = run_suite(trials=args.trials, seed=cfg.seed, eps=args.eps, tau=cfg.tau, alpha=cfg.alpha)
    worst = 0.0
    print("check,trials,max_rel_err", file=out)
    for name, err in results.items():
        print(f"{name},{args.trials},{err:.3e}", file=out)
        worst = max(worst, err)
    status = "PASS" if worst < args.tol else "FAIL"
    print(f"{status} worst {worst:.3e} tol {args.tol:g}", file=out)
    if worst >= args.tol:
        raise NumericError(f"gradient check failed: {worst:.3e} >= {args.tol:g}")
    return 0


def cmd_rerank(args, cfg: RunConfig, out) -> int:
    s = load_matrix(args.matrix, args.format)
    params = cfg.smr()
    res = smr_rerank(s, params, args.positivity)
    print(f"# K {params.k} gamma1 {_fmt(params.gamma1)} gamma2 {_fmt(params.gamma2)} direction {params.direction}", file=out)
    print("# s_opt", file=out)
    for row in res.s_opt:
        print(",".join(_fmt(v) for v in row), file=out)
    print("# rankings (query: candidates best first)", file=out)
    for q, ranking in enumerate(res.rankings):
        print(f"{q}: " + " ".join(str(int(c)) for c in ranking), file=out)
    if args.out:
        save_matrix(res.s_opt, args.out, args.format)
    if args.rankings:
        Path(args.rankings).write_text(
            "".join(",".join(str(int(c)) for c in r) + "\n" for r in res.rankings), encoding="utf-8")
    return 0


def _reranked_report(s, gt, cfg: RunConfig, gamma1: float, gamma2: float, positivity: str):
    r_i2t = smr_rerank(s, SmrParams(cfg.k, gamma1, gamma2, "i2t"), positivity).rankings
    r_t2i = smr_rerank(s, SmrParams(cfg.k, gamma1, gamma2, "t2i"), positivity).rankings
    return report_from_rankings(r_i2t, r_t2i, gt)


def cmd_eval(args, cfg: RunConfig, out) -> int:
    s = load_matrix(args.matrix, args.format)
    gt = load_ground_truth(args.gt)
    if args.rerank:
        report = _reranked_report(s, gt, cfg, cfg.gamma1, cfg.gamma2, args.positivity)
        print(f"# SMR K {cfg.k} gamma1 {_fmt(cfg.gamma1)} gamma2 {_fmt(cfg.gamma2)}", file=out)
    else:
        report = metrics_report(s, gt)
    print(report.table(), file=out)
    print(file=out)
    print(report.csv(), end="", file=out)
    if args.out:
        Path(args.out).write_text(report.csv(), encoding="utf-8")
    return 0


def _grid(values, default):
    if values is None:
        return default
    return tuple(float(v) for v in values.split(","))


def cmd_sweep(args, cfg: RunConfig, out) -> int:
    s = load_matrix(args.matrix, args.format)
    gt = load_ground_truth(args.gt)
    g1s = _grid(args.gamma1_values, DEFAULT_GRID)
    g2s = _grid(args.gamma2_values, DEFAULT_GRID)
    buf = io.StringIO()
    buf.write("gamma1,gamma2,txt_R@1,txt_R@5,txt_R@10,img_R@1,img_R@5,img_R@10,mR\n")
    best = None
    for g1 in g1s:
        for g2 in g2s:
            rep = _reranked_report(s, gt, cfg, g1, g2, args.positivity)
            buf.write(",".join([_fmt(g1), _fmt(g2)] + [_fmt(v) for v in rep.row()]) + "\n")
            if best is None or rep.mr > best[2]:
                best = (g1, g2, rep.mr)
    raw = metrics_report(s, gt).mr
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="", file=out)
    print(f"# K {cfg.k} cells {len(g1s) * len(g2s)} raw_mR {raw:.4f} "
          f"best gamma1 {_fmt(best[0])} gamma2 {_fmt(best[1])} mR {best[2]:.4f}", file=out)
    return 0


def cmd_gen_synth(args, cfg: RunConfig, out) -> int:
    F, G, gt = gen_synthetic(args.n_img, args.caps, args.dim, args.noise, cfg.seed, hub=args.hub)
    outdir = Path(args.out or cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    s = cosine_similarity(F, G)
    ext = "bin" if args.format == "bin" else "csv"
    save_matrix(F, outdir / "images.csv")
    save_matrix(G, outdir / "texts.csv")
    save_matrix(s, outdir / f"sim.{ext}")
    save_ground_truth(gt, outdir / "gt.tsv")
    print(f"images {F.shape[0]} texts {G.shape[0]} dim {F.shape[1]} noise {_fmt(args.noise)} "
          f"hub {_fmt(args.hub)} seed {cfg.seed}", file=out)
    for name in ("images.csv", "texts.csv", f"sim.{ext}", "gt.tsv"):
        print(f"wrote {name}", file=out)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat TOML config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--print-config", action="store_true", help="echo the resolved config first")

    smr_flags = _Parser(add_help=False)
    smr_flags.add_argument("--k", type=int)
    smr_flags.add_argument("--gamma1", type=float)
    smr_flags.add_argument("--gamma2", type=float)
    smr_flags.add_argument("--direction", choices=("i2t", "t2i"))
    smr_flags.add_argument("--positivity", choices=("auto", "always", "never"), default="auto")
    smr_flags.add_argument("--format", choices=("csv", "bin"), help="matrix format (default: by extension)")

    parser = _Parser(prog="crossret", description="Cross-modal retrieval toolkit")
    parser.add_argument("--version", action="version", version=f"crossret {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("encode-demo", parents=[common], help="encode a PPM image, print the stage ledger")
    p.add_argument("image")
    p.add_argument("--feature-out")
    p.set_defaults(func=cmd_encode_demo)

    p = sub.add_parser("loss-demo", parents=[common], help="print the four losses on a seeded batch")
    p.add_argument("--batch", type=int, default=4)
    p.set_defaults(func=cmd_loss_demo)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference checks of loss gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("rerank", parents=[common, smr_flags], help="SMR rerank a similarity matrix")
    p.add_argument("matrix")
    p.add_argument("--rankings", help="write final rankings CSV here")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", parents=[common, smr_flags], help="Recall@K report for a matrix")
    p.add_argument("matrix")
    p.add_argument("gt")
    p.add_argument("--rerank", action="store_true", help="apply SMR in both directions first")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common, smr_flags], help="grid over gamma1 x gamma2, CSV of mR")
    p.add_argument("matrix")
    p.add_argument("gt")
    p.add_argument("--gamma1-values", help="comma-separated list (default 0.5..2.0 step 0.1)")
    p.add_argument("--gamma2-values", help="comma-separated list (default 0.5..2.0 step 0.1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-synth", parents=[common], help="write synthetic embeddings, matrix and gt")
    p.add_argument("--n-img", type=int, default=50)
    p.add_argument("--caps", type=int, default=5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--hub", type=float, default=0.0)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=cmd_gen_synth)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_help())
        cfg = _resolve_config(args)
        if args.print_config:
            print(dump_config(cfg), end="", file=out)
        return args.func(args, cfg, out)
    except UsageError as exc:
        print(str(exc).rstrip(), file=err)
        return 1
    except CrossretError as exc:
        print(f"error: {exc}", file=err)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return 2


if __name__ == "__main__":
    sys.exit(main())

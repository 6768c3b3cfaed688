"""Command-line front end: learn, segment, pipeline, eval, render-filters.

Every command resolves its configuration as profile defaults, then an
optional key=value config file, then --set overrides, then explicit flags;
the effective config is echoed to a sidecar file next to each output.  Exit
codes: 0 success, 1 usage error, 2 I/O or file-format error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import kernels
from .errors import FormatError, NumericalError, UsageError
from .imagecore import Image, Stencil, gaussian_mask, load_image, sample_super_patches, to_grayscale
from .learn import LearnParams, cg_learn
from .manifold import load_bank, save_bank
from .metrics import compare_segmentations, write_reports_csv, write_reports_json
from .potts import AdmmSchedule
from .segment import (
    MergeParams,
    read_label_map,
    segment_pipeline,
    write_label_map,
    write_label_preview,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--profile", choices=cfgmod.PROFILES, default="prague")
    p.add_argument("--seed", type=int, help="RNG seed for sampling and init")
    p.add_argument("--threads", type=int, help="worker thread cap (0 = default)")
    p.add_argument("--gamma", type=float, help="jump penalty")
    p.add_argument("--filters", type=int, help="feature channel count K")
    p.add_argument("--filter-size", type=int, dest="filter_size", help="template side")
    p.add_argument("--patches", type=int, help="training patch count M")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _resolve_config(args):
    cfg = cfgmod.default_config(args.profile)
    if args.config:
        if not os.path.exists(args.config):
            raise IOError(f"no such config file: {args.config}")
        cfg = cfgmod.apply_overrides(cfg, cfgmod.load_config(args.config))
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg = cfgmod.apply_overrides(cfg, overrides)
    for flag, key in (
        ("seed", "seed"),
        ("threads", "threads"),
        ("gamma", "gamma"),
        ("filters", "filters"),
        ("filter_size", "filter_side"),
        ("patches", "patches"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            cfg = cfgmod.apply_overrides(cfg, {key: str(value)})
    cfg.validate()
    _apply_threads(cfg.threads)
    return cfg


def _apply_threads(n):
    if n and kernels.backend_name() == "numba":
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _load_input_image(path, cfg):
    img = load_image(path)
    if cfg.grayscale:
        img = to_grayscale(img)
    return img


def _learn_bank(img, cfg, log_path=None):
    stencil = Stencil.eight_connected()
    mask = gaussian_mask(cfg.filter_side, cfg.resolved_mask_sigma())
    patches = sample_super_patches(
        img, cfg.patches, cfg.filter_side, stencil, mask, cfg.seed
    )
    params = LearnParams(
        mu=cfg.mu,
        nu=cfg.nu,
        lam=cfg.coherence_weight,
        kappa=cfg.centroid_weight,
        grad_tol=cfg.grad_tol,
        max_iters=cfg.max_learn_iters,
    )
    result = cg_learn(patches, stencil, params, k=cfg.k_learn, seed=cfg.seed)
    if log_path:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ("iteration", "objective", "data_term", "coherence", "centering", "grad_norm", "step")
            )
            for rec in result.trace:
                writer.writerow(
                    (
                        rec.iteration,
                        repr(rec.objective),
                        repr(rec.data_term),
                        repr(rec.coherence),
                        repr(rec.centering),
                        repr(rec.grad_norm),
                        repr(rec.step),
                    )
                )
    return result


def _run_segment(img, bank, cfg):
    if bank.side > min(img.height, img.width):
        raise UsageError(
            f"bank side {bank.side} exceeds image {img.height}x{img.width}"
        )
    schedule = AdmmSchedule(
        mu0=cfg.resolved_admm_mu0(),
        exponent=cfg.admm_exponent,
        max_outer=cfg.admm_max_outer,
        agree_tol=cfg.admm_agree_tol,
    )
    mask = gaussian_mask(bank.side, cfg.mask_sigma if cfg.mask_sigma > 0 else bank.side / 4.0)
    return segment_pipeline(
        img,
        bank,
        cfg.gamma,
        mu=cfg.mu,
        mask=mask,
        epsilon_scale=cfg.epsilon_scale,
        extract_tol=cfg.extract_tol,
        merge=MergeParams(min_area_fraction=cfg.min_area_fraction),
        schedule=schedule,
    )


def _preview_path(label_path):
    root, _ = os.path.splitext(str(label_path))
    return root + "_preview.png"


def cmd_learn(args):
    cfg = _resolve_config(args)
    img = _load_input_image(args.image, cfg)
    result = _learn_bank(img, cfg, args.log)
    save_bank(args.output, result.bank)
    cfgmod.write_sidecar(args.output, cfg)
    print(
        f"learned {result.bank.k} filters (+mean) in {result.iterations} iterations: "
        f"objective {result.objective:.6f}, grad norm {result.grad_norm:.3e}, {result.status}"
    )
    return 0


def cmd_segment(args):
    cfg = _resolve_config(args)
    bank = load_bank(args.bank)
    img = _load_input_image(args.image, cfg)
    result = _numerical(_run_segment, img, bank, cfg)
    write_label_map(args.output, result.labels)
    write_label_preview(args.preview or _preview_path(args.output), result.labels)
    cfgmod.write_sidecar(args.output, cfg)
    print(f"{result.n_regions} regions, energy {result.energy:.6f}, {result.status}")
    return 0


def cmd_pipeline(args):
    cfg = _resolve_config(args)
    img = _load_input_image(args.image, cfg)
    learn_result = _learn_bank(img, cfg, args.log)
    bank_path = args.bank_out or os.path.splitext(str(args.output))[0] + ".txsf"
    save_bank(bank_path, learn_result.bank)
    result = _numerical(_run_segment, img, learn_result.bank, cfg)
    write_label_map(args.output, result.labels)
    write_label_preview(args.preview or _preview_path(args.output), result.labels)
    cfgmod.write_sidecar(args.output, cfg)
    print(
        f"learned {learn_result.bank.k} filters ({learn_result.status}); "
        f"{result.n_regions} regions, energy {result.energy:.6f}, {result.status}"
    )
    return 0


def cmd_eval(args):
    pred = read_label_map(args.pred)
    gt = read_label_map(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"label map sizes differ: {pred.shape} vs {gt.shape}")
    if not 0.5 < args.threshold <= 1.0:
        raise UsageError("threshold must lie in (0.5, 1]")
    report = compare_segmentations(pred, gt, args.threshold)
    name = os.path.basename(str(args.pred))
    for key, value in report.to_dict().items():
        print(f"{key} = {value:.6f}")
    prefix = args.out_prefix or os.path.splitext(str(args.pred))[0] + ".metrics"
    write_reports_csv(prefix + ".csv", [(name, report)])
    write_reports_json(prefix + ".json", [(name, report)])
    return 0


def render_montage(bank):
    """8-bit montage: per-filter linear map, 0 -> mid-gray, +-max -> white/black."""
    side = bank.side
    cols_mat = bank.all_columns()
    count = cols_mat.shape[1]
    grid_cols = max(1, math.ceil(math.sqrt(count)))
    grid_rows = max(1, math.ceil(count / grid_cols))
    height = grid_rows * side + (grid_rows + 1)
    width = grid_cols * side + (grid_cols + 1)
    canvas = np.zeros((height, width), dtype=np.uint8)
    for i in range(grid_rows * grid_cols):
        r, c = divmod(i, grid_cols)
        y0 = 1 + r * (side + 1)
        x0 = 1 + c * (side + 1)
        if i >= count:
            canvas[y0 : y0 + side, x0 : x0 + side] = 128
            continue
        tile = cols_mat[:, i].reshape(side, side)
        vmax = np.abs(tile).max()
        scaled = tile / vmax if vmax > 0 else tile
        canvas[y0 : y0 + side, x0 : x0 + side] = np.rint(
            127.5 + 127.5 * scaled
        ).astype(np.uint8)
    return canvas


def cmd_render_filters(args):
    import cv2

    bank = load_bank(args.bank)
    canvas = render_montage(bank)
    if not cv2.imwrite(str(args.output), canvas):
        raise IOError(f"could not write montage: {args.output}")
    print(f"rendered {bank.k_total} filters to {args.output}")
    return 0


def _numerical(fn, *a, **kw):
    """Run a solver stage, converting stray numeric errors to NumericalError."""
    try:
        return fn(*a, **kw)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise NumericalError(str(exc)) from exc


def build_parser():
    parser = _Parser(prog="texseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a filter bank from one image")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True, help="output bank (.txsf)")
    p.add_argument("--log", help="per-iteration CSV log")
    _add_config_flags(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("segment", help="segment an image with a learned bank")
    p.add_argument("image")
    p.add_argument("bank")
    p.add_argument("-o", "--output", required=True, help="output 16-bit label PNG")
    p.add_argument("--preview", help="color preview PNG path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("pipeline", help="learn then segment in one run")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True, help="output 16-bit label PNG")
    p.add_argument("--bank-out", help="where to store the learned bank")
    p.add_argument("--preview", help="color preview PNG path")
    p.add_argument("--log", help="per-iteration CSV log")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="compare a predicted label map to ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--threshold", type=float, default=0.75)
    p.add_argument("--out-prefix", help="metrics output prefix (.csv/.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-filters", help="montage of a bank's templates")
    p.add_argument("bank")
    p.add_argument("-o", "--output", required=True, help="output PNG")
    p.set_defaults(func=cmd_render_filters)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = args.func(args)
        return 0 if code is None else code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

import argparse
import json
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..adaptation import SegmentPlan, adapted_forward, full_pass, seam_report, summarize_seams
from ..annular_geometry import fold_back, load_camera_model, unfold
from ..config import PipelineConfig, build_network, load_pipeline_config
from ..errors import ConfigError
from ..evaluation import render
from ..imageio import load_rgb, save_labels, save_rgb
from ..labels import ClassMap, SegmentationMap, load_class_map
from ..swaftnet import check_segment_size, class_heatmap
from .base import BaseCommand, CommandResult

logger = logging.getLogger(__name__)

SEAM_REPORT_VERSION = 1


class InferCommand(BaseCommand):
    """
    Panoramic semantic segmentation of one image.

    ``adapted`` runs the segment-wise feature models with neighbour padding
    exchange; ``full`` treats the panorama as a single segment. Options given
    on the command line override the config file.

    Args:
        config: pipeline config (JSON)
        in: panorama (or raw annular image with --annular) PNG
        out: class-id map to write (8-bit PNG)
        mode: adapted or full
        emit_logits: also write the logits (.npy)
        seam_report: compare adapted and full ring inference per column (JSON)
        render: colour rendering of the class map (PNG)
        heatmap: CLASS:PATH probability heatmap of one class (repeatable)
        annular: the input is a raw annular image, unfolded with the config's camera model
        fold_back: class-id map folded back to annular coordinates (PNG)
        threads: maximum number of segment workers
        seed: random weight seed (replaces the config's weights)
        num_segments: number of segments
        overlap: overlap columns per side
        padding_mode: full-pass padding, ring or zero
        segment_padding: adapted-mode segment padding, neighbor or zero
    """

    @property
    def command_name(self) -> str:
        return "infer"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", required=True, help=self.option_help("config"))
        parser.add_argument("--in", dest="input", required=True, help=self.option_help("in"))
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--mode", choices=["adapted", "full"], default="adapted", help=self.option_help("mode"))
        parser.add_argument("--emit-logits", help=self.option_help("emit_logits"))
        parser.add_argument("--seam-report", help=self.option_help("seam_report"))
        parser.add_argument("--render", help=self.option_help("render"))
        parser.add_argument("--heatmap", action="append", default=[], help=self.option_help("heatmap"))
        parser.add_argument("--annular", action="store_true", help=self.option_help("annular"))
        parser.add_argument("--fold-back", help=self.option_help("fold_back"))
        parser.add_argument("--threads", type=int, help=self.option_help("threads"))
        parser.add_argument("--seed", type=int, help=self.option_help("seed"))
        parser.add_argument("--num-segments", type=int, help=self.option_help("num_segments"))
        parser.add_argument("--overlap", type=int, help=self.option_help("overlap"))
        parser.add_argument("--padding-mode", choices=["ring", "zero"], help=self.option_help("padding_mode"))
        parser.add_argument(
            "--segment-padding", choices=["neighbor", "zero"], help=self.option_help("segment_padding")
        )

    def run(self, args: argparse.Namespace) -> CommandResult:
        config = load_pipeline_config(args.config).with_overrides(
            seed=args.seed,
            threads=args.threads,
            num_segments=args.num_segments,
            overlap=args.overlap,
            padding_mode=args.padding_mode,
            segment_padding=args.segment_padding,
        )
        class_map = load_class_map(config.class_map) if config.class_map else None
        heatmaps = [_parse_heatmap(spec, class_map) for spec in args.heatmap]
        if args.render and class_map is None:
            raise ConfigError("--render needs a class_map in the config")

        # sizes are checked before unfolding or building the network
        definition = config.network_def()
        image = load_rgb(args.input)
        if args.annular:
            camera = self._camera_model(config)
            width, height = self._panorama_size(config)
            shape = (image.shape[0], height, width)
        else:
            shape = image.shape
        check_segment_size(shape, definition)
        plan = SegmentPlan(
            panorama_width=shape[2],
            num_segments=config.num_segments,
            overlap=config.overlap,
            resize_to=config.resize_to,
        )
        panorama = unfold(image, camera, width, height) if args.annular else image
        net = build_network(config)

        if args.mode == "adapted":
            result = adapted_forward(net, panorama, plan, config.segment_padding, config.threads, class_map)
            logits = result.logits
            logger.info("Timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in result.timings.items()))
        else:
            logits = full_pass(net, panorama, config.padding_mode)
        segmentation = SegmentationMap.from_logits(logits, class_map)
        out = config.output_path(args.out)
        save_labels(out, segmentation.ids)
        written = [out]

        if args.emit_logits:
            path = config.output_path(args.emit_logits)
            path.parent.mkdir(parents=True, exist_ok=True)
            np.save(path, logits)
            written.append(path)
        if args.seam_report:
            path = config.output_path(args.seam_report)
            self._write_seam_report(path, args.mode, config, net, panorama, plan, logits)
            written.append(path)
        if args.render:
            path = config.output_path(args.render)
            save_rgb(path, render(segmentation, class_map))
            written.append(path)
        for class_id, name in heatmaps:
            path = config.output_path(name)
            save_rgb(path, class_heatmap(logits, class_id)[None])
            written.append(path)
        if args.fold_back:
            path = config.output_path(args.fold_back)
            model = self._camera_model(config)
            save_labels(path, fold_back(segmentation.ids[None], model, mode="nearest")[0])
            written.append(path)
        return CommandResult(message=f"{args.mode} inference wrote {', '.join(str(p) for p in written)}")

    def _camera_model(self, config: PipelineConfig):
        if config.camera_model is None:
            raise ConfigError("This option needs camera_model in the config")
        return load_camera_model(config.camera_model)

    def _panorama_size(self, config: PipelineConfig) -> Tuple[int, int]:
        if config.panorama_size is None:
            raise ConfigError("--annular needs panorama_size [width, height] in the config")
        return config.panorama_size

    def _write_seam_report(self, path: Path, mode: str, config, net, panorama, plan, logits) -> None:
        if mode == "adapted":
            adapted, full = logits, full_pass(net, panorama, "ring")
        else:
            adapted = adapted_forward(net, panorama, plan, config.segment_padding, config.threads).logits
            full = full_pass(net, panorama, "ring") if config.padding_mode != "ring" else logits
        profile = seam_report(adapted, full)
        summary = summarize_seams(profile, plan.boundaries())
        document = {
            "version": SEAM_REPORT_VERSION,
            "num_segments": plan.num_segments,
            "segment_padding": config.segment_padding,
            "approximate": plan.resize_to is not None,
            "summary": summary.model_dump(),
            "profile": [float(v) for v in profile],
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
        logger.info(f"Seam report: max {summary.max_abs:.3g}, boundary max {summary.boundary_max:.3g}")


def _parse_heatmap(spec: str, class_map: Optional[ClassMap]):
    name, sep, path = spec.partition(":")
    if not sep or not name or not path:
        raise ConfigError(f"--heatmap expects CLASS:PATH, got {spec!r}")
    if name.isdigit():
        return int(name), path
    if class_map is None:
        raise ConfigError(f"Class name {name!r} needs a class_map in the config")
    return class_map.class_id(name), path

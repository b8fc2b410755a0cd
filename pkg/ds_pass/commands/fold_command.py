import argparse

from ..annular_geometry import fold_back, load_camera_model
from ..imageio import load_labels, load_rgb, save_labels, save_rgb
from .base import BaseCommand, CommandResult


class FoldCommand(BaseCommand):
    """
    Fold a panorama back onto raw annular coordinates.

    Class-id maps (--labels) always use nearest sampling; pixels outside the
    ring become the ignore id 255 (black for images).

    Args:
        model: camera model JSON file
        in: panorama (PNG)
        out: annular raster to write (PNG)
        labels: treat the input as a single-channel class-id map
        mode: sampling for images, nearest or bilinear
    """

    @property
    def command_name(self) -> str:
        return "fold"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--model", required=True, help=self.option_help("model"))
        parser.add_argument("--in", dest="input", required=True, help=self.option_help("in"))
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--labels", action="store_true", help=self.option_help("labels"))
        parser.add_argument("--mode", choices=["nearest", "bilinear"], default="bilinear", help=self.option_help("mode"))

    def run(self, args: argparse.Namespace) -> CommandResult:
        model = load_camera_model(args.model)
        if args.labels:
            ids = load_labels(args.input)
            save_labels(args.out, fold_back(ids[None], model, mode="nearest")[0])
        else:
            save_rgb(args.out, fold_back(load_rgb(args.input), model, mode=args.mode))
        return CommandResult(message=f"Folded {args.input} back to {args.out}")

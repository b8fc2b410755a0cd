import argparse

from ..annular_geometry import load_camera_model, unfold
from ..imageio import load_rgb, save_rgb
from .base import BaseCommand, CommandResult


class UnfoldCommand(BaseCommand):
    """
    Unfold a raw annular image into a horizontally periodic panorama.

    Args:
        model: camera model JSON file
        in: annular image (PNG)
        out: panorama to write (PNG)
        width: panorama width in pixels
        height: panorama height in pixels
    """

    @property
    def command_name(self) -> str:
        return "unfold"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--model", required=True, help=self.option_help("model"))
        parser.add_argument("--in", dest="input", required=True, help=self.option_help("in"))
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--width", type=int, required=True, help=self.option_help("width"))
        parser.add_argument("--height", type=int, required=True, help=self.option_help("height"))

    def run(self, args: argparse.Namespace) -> CommandResult:
        model = load_camera_model(args.model)
        annular = load_rgb(args.input)
        panorama = unfold(annular, model, args.width, args.height)
        save_rgb(args.out, panorama)
        return CommandResult(message=f"Unfolded {args.input} to {args.out} ({args.width}x{args.height})")

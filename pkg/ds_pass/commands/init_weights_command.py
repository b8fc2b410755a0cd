import argparse

from ..config import load_pipeline_config
from ..swaftnet import NetworkDef, save_weights, seeded_weights
from .base import BaseCommand, CommandResult


class InitWeightsCommand(BaseCommand):
    """
    Write a weight container of seeded random SwaftNet parameters.

    Args:
        out: weight container to write
        seed: random seed
        config: optional pipeline config whose network settings are used
    """

    @property
    def command_name(self) -> str:
        return "init-weights"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--out", required=True, help=self.option_help("out"))
        parser.add_argument("--seed", type=int, default=0, help=self.option_help("seed"))
        parser.add_argument("--config", help=self.option_help("config"))

    def run(self, args: argparse.Namespace) -> CommandResult:
        definition = NetworkDef()
        if args.config:
            definition = load_pipeline_config(args.config, check_files=False).network_def()
        weights = seeded_weights(definition, args.seed)
        save_weights(weights, args.out)
        return CommandResult(message=f"Wrote {len(weights)} parameters (seed {args.seed}) to {args.out}")

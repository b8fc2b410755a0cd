from .base import BaseCommand, CommandResult
from .registry import CommandRegistry, get_registry

__all__ = ["BaseCommand", "CommandResult", "CommandRegistry", "get_registry"]

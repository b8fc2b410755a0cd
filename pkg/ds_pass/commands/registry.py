"""
Command registry: discovers every ``*_command`` module of this package.
"""

import importlib
import logging
import pkgutil
import threading
from pathlib import Path
from typing import Dict, List

from .base import BaseCommand

logger = logging.getLogger("ds_pass.commands")


class CommandRegistry:
    """
    Registry of all command-line commands.

    Singleton, initialised once and thread safe.
    """

    _instance = None
    _lock = threading.Lock()
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:  # Double-check
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        with self._lock:
            if self._initialized:  # Double-check
                return
            self._commands: Dict[str, BaseCommand] = {}
            self._load_commands()
            self._initialized = True

    def _load_commands(self):
        """
        Import every ``*_command`` module next to this file and instantiate
        the BaseCommand subclasses it defines.
        """
        current_dir = Path(__file__).parent
        for module_info in pkgutil.iter_modules([str(current_dir)]):
            if not module_info.name.endswith("_command"):
                continue
            module = importlib.import_module(f".{module_info.name}", package=__package__)
            for item_name in dir(module):
                item = getattr(module, item_name)
                if (
                    isinstance(item, type)
                    and issubclass(item, BaseCommand)
                    and item is not BaseCommand
                    and item.__module__ == module.__name__
                ):
                    command = item()
                    self._commands[command.command_name] = command
        logger.debug(f"Registered commands: {sorted(self._commands)}")

    def names(self) -> List[str]:
        return sorted(self._commands)

    def get(self, name: str) -> BaseCommand:
        """
        Look up a command by name

        Args:
            name: str - sub-command name

        Returns:
            BaseCommand: the command instance

        Raises:
            KeyError: no such command
        """
        if name not in self._commands:
            raise KeyError(f"Command {name} does not exist")
        return self._commands[name]

    def describe(self) -> str:
        """Markdown overview of all commands built from their docstrings."""
        lines = ["# Commands\n"]
        for name in self.names():
            info = self._commands[name].get_command_info()
            lines.extend([f"## {name}", info["description"], ""])
        return "\n".join(lines)


_default_registry = None
_registry_lock = threading.Lock()


def get_registry() -> CommandRegistry:
    """
    Get the default CommandRegistry instance

    Returns:
        CommandRegistry: shared registry
    """
    global _default_registry
    if _default_registry is None:
        with _registry_lock:
            if _default_registry is None:  # Double-check
                _default_registry = CommandRegistry()
    return _default_registry

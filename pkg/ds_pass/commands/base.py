"""
Command base class.

Class hierarchy:
BaseCommand (base)
    one subclass per ``*_command`` module, discovered by the registry
"""

import argparse
import inspect
from abc import ABC, abstractmethod
from typing import Any, Dict

from docstring_parser import Docstring, parse
from pydantic import BaseModel

from ..errors import EXIT_OK, DSPassError


class CommandResult(BaseModel):
    """Outcome of a command"""

    message: str
    is_error: bool = False
    exit_code: int = EXIT_OK

    @classmethod
    def failure(cls, error: DSPassError) -> "CommandResult":
        return cls(message=str(error), is_error=True, exit_code=error.exit_code)


class BaseCommand(ABC):
    """
    Base class of all command-line commands.

    Subclasses document their options in the class docstring's ``Args``
    section; the text becomes the argparse help.
    """

    @property
    @abstractmethod
    def command_name(self) -> str:
        """
        Name of the sub-command on the command line

        Returns:
            str: sub-command name
        """
        pass

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register the command's options."""
        pass

    @abstractmethod
    def run(self, args: argparse.Namespace) -> CommandResult:
        """
        Execute the command.

        Raises:
            DSPassError: mapped to the process exit code by the CLI
        """
        pass

    def _docstring(self) -> Docstring:
        return parse(inspect.getdoc(type(self)) or "")

    def get_command_info(self) -> Dict[str, Any]:
        """
        Basic information about the command

        Returns:
            Dict[str, Any]: name, description (first docstring paragraph) and details
        """
        doc = self._docstring()
        return {
            "name": self.command_name,
            "description": doc.short_description or "",
            "details": doc.long_description or "",
        }

    def option_help(self, name: str) -> str:
        """Help text of one option, taken from the class docstring's Args section."""
        for param in self._docstring().params:
            if param.arg_name == name:
                return param.description or ""
        return ""
